#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "signrec/error.hpp"

namespace signrec {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
// Stream log-densities are clamped here so sums over streams stay finite.
inline constexpr double kLogDensityFloor = -1e10;
inline constexpr double kDefaultVarianceFloor = 1e-4;

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Mixture of diagonal-covariance Gaussians over one stream. Means and
// variances are stored component-major: component m occupies [m*dim, (m+1)*dim).
class StreamDensity {
 public:
  StreamDensity() = default;

  StreamDensity(std::size_t dim, std::vector<double> weights, std::vector<double> means,
                std::vector<double> variances)
      : dim_(dim), weights_(std::move(weights)), means_(std::move(means)),
        variances_(std::move(variances)) {
    validate();
    precompute();
  }

  static StreamDensity gaussian(std::vector<double> mean, std::vector<double> variance) {
    const std::size_t d = mean.size();
    return StreamDensity(d, {1.0}, std::move(mean), std::move(variance));
  }

  std::size_t dim() const { return dim_; }
  std::size_t components() const { return weights_.size(); }
  double weight(std::size_t m) const { return weights_[m]; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> mean(std::size_t m) const {
    return std::span<const double>(means_).subspan(m * dim_, dim_);
  }
  std::span<const double> variance(std::size_t m) const {
    return std::span<const double>(variances_).subspan(m * dim_, dim_);
  }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& variances() const { return variances_; }

  // Weight-averaged mean vector; equals the mean for a single Gaussian.
  std::vector<double> average_mean() const {
    if (components() == 1) return means_;
    std::vector<double> out(dim_, 0.0);
    for (std::size_t m = 0; m < components(); ++m)
      for (std::size_t d = 0; d < dim_; ++d) out[d] += weights_[m] * means_[m * dim_ + d];
    return out;
  }

  std::vector<double> average_variance() const {
    if (components() == 1) return variances_;
    std::vector<double> out(dim_, 0.0);
    for (std::size_t m = 0; m < components(); ++m)
      for (std::size_t d = 0; d < dim_; ++d) out[d] += weights_[m] * variances_[m * dim_ + d];
    return out;
  }

  double component_log_likelihood(std::size_t m, std::span<const double> x) const {
    const double* mu = means_.data() + m * dim_;
    const double* iv = inv_var_.data() + m * dim_;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = x[d] - mu[d];
      acc += diff * diff * iv[d];
    }
    return log_norm_[m] - 0.5 * acc;
  }

  // Log density, clamped below at kLogDensityFloor.
  double log_likelihood(std::span<const double> x) const {
    if (x.size() != dim_)
      throw DimensionMismatch("stream density of dimension " + std::to_string(dim_) +
                              " given vector of size " + std::to_string(x.size()));
    double ll;
    if (weights_.size() == 1) {
      ll = component_log_likelihood(0, x);
    } else {
      double m = kLogZero;
      for (std::size_t c = 0; c < weights_.size(); ++c)
        m = log_add(m, component_log_likelihood(c, x));
      ll = m;
    }
    return std::max(ll, kLogDensityFloor);
  }

  bool operator==(const StreamDensity& o) const {
    return dim_ == o.dim_ && weights_ == o.weights_ && means_ == o.means_ &&
           variances_ == o.variances_;
  }

 private:
  void validate() const {
    if (dim_ == 0) throw InvalidModel("stream density has zero dimension");
    if (weights_.empty()) throw InvalidModel("stream density has no components");
    if (means_.size() != weights_.size() * dim_ || variances_.size() != means_.size())
      throw DimensionMismatch("stream density parameter sizes disagree");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw InvalidModel("negative mixture weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidModel("mixture weights do not sum to 1");
    for (double v : variances_)
      if (!(v > 0.0) || !std::isfinite(v)) throw InvalidModel("variance must be positive");
    for (double m : means_)
      if (!std::isfinite(m)) throw InvalidModel("mean must be finite");
  }

  void precompute() {
    const std::size_t mcount = weights_.size();
    log_norm_.assign(mcount, 0.0);
    inv_var_.resize(variances_.size());
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    for (std::size_t m = 0; m < mcount; ++m) {
      double acc = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double v = variances_[m * dim_ + d];
        acc += log_2pi + std::log(v);
        inv_var_[m * dim_ + d] = 1.0 / v;
      }
      log_norm_[m] = (weights_[m] > 0.0 ? std::log(weights_[m]) : kLogZero) - 0.5 * acc;
    }
  }

  std::size_t dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::vector<double> log_norm_;
  std::vector<double> inv_var_;
};

// Sufficient statistics for re-estimating one StreamDensity.
class DensityAccumulator {
 public:
  DensityAccumulator() = default;
  DensityAccumulator(std::size_t dim, std::size_t components)
      : dim_(dim), occ_(components, 0.0), sum_(dim * components, 0.0),
        sumsq_(dim * components, 0.0) {}

  // Adds frame x with state occupancy `gamma`, split across components by
  // their posterior under `current`.
  void add(const StreamDensity& current, std::span<const double> x, double gamma) {
    if (gamma <= 0.0) return;
    const std::size_t mcount = occ_.size();
    if (mcount == 1) {
      add_component(0, x, gamma);
      return;
    }
    scratch_.resize(mcount);
    for (std::size_t m = 0; m < mcount; ++m) scratch_[m] = current.component_log_likelihood(m, x);
    const double total = log_sum_exp(scratch_);
    for (std::size_t m = 0; m < mcount; ++m) {
      const double post = total == kLogZero ? 1.0 / double(mcount) : std::exp(scratch_[m] - total);
      add_component(m, x, gamma * post);
    }
  }

  double occupancy() const {
    double t = 0.0;
    for (double o : occ_) t += o;
    return t;
  }

  // ML estimate with variance floor. Components without occupancy keep the
  // parameters of `previous`.
  StreamDensity estimate(const StreamDensity& previous, double variance_floor) const {
    const std::size_t mcount = occ_.size();
    const double total = occupancy();
    if (!(total > 0.0)) return previous;
    std::vector<double> w(mcount), mu(dim_ * mcount), var(dim_ * mcount);
    for (std::size_t m = 0; m < mcount; ++m) {
      w[m] = occ_[m] / total;
      for (std::size_t d = 0; d < dim_; ++d) {
        const std::size_t i = m * dim_ + d;
        if (occ_[m] > 1e-10) {
          mu[i] = sum_[i] / occ_[m];
          var[i] = std::max(sumsq_[i] / occ_[m] - mu[i] * mu[i], variance_floor);
        } else {
          mu[i] = previous.mean(m)[d];
          var[i] = previous.variance(m)[d];
        }
      }
    }
    double wsum = 0.0;
    for (double x : w) wsum += x;
    for (double& x : w) x /= wsum;
    return StreamDensity(dim_, std::move(w), std::move(mu), std::move(var));
  }

 private:
  void add_component(std::size_t m, std::span<const double> x, double g) {
    occ_[m] += g;
    double* s = sum_.data() + m * dim_;
    double* q = sumsq_.data() + m * dim_;
    for (std::size_t d = 0; d < dim_; ++d) {
      s[d] += g * x[d];
      q[d] += g * x[d] * x[d];
    }
  }

  std::size_t dim_ = 0;
  std::vector<double> occ_, sum_, sumsq_;
  std::vector<double> scratch_;
};

}  // namespace signrec
