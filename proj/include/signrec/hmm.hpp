#pragma once

// Untied multi-stream sign HMMs: left-to-right topology without skips, one
// Gaussian-mixture density per stream and state.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "signrec/density.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"

namespace signrec {

using SignId = std::uint32_t;

struct StateModel {
  std::array<StreamDensity, kNumStreams> streams;

  bool operator==(const StateModel&) const = default;
};

// Sum of the six stream log-densities.
inline double state_log_likelihood(const StateModel& state, const Frame& frame,
                                   const StreamLayout& layout = StreamLayout::standard()) {
  double acc = state.streams[0].log_likelihood(stream_view(frame, 0, layout));
  for (std::size_t s = 1; s < kNumStreams; ++s)
    acc += state.streams[s].log_likelihood(stream_view(frame, s, layout));
  return acc;
}

// Per-state self-loop probabilities; the complementary mass goes to the next
// state, or out of the model for the last state.
struct SignHMM {
  std::string name;
  std::vector<StateModel> states;
  std::vector<double> self_loop;
  // Expected frame count per state accumulated in training (1 when unknown).
  std::vector<double> occupancy;

  std::size_t num_states() const { return states.size(); }
  double log_self(std::size_t j) const { return std::log(self_loop[j]); }
  double log_advance(std::size_t j) const { return std::log1p(-self_loop[j]); }
  double log_exit() const { return log_advance(states.size() - 1); }

  void validate(const StreamLayout& layout = StreamLayout::standard()) const {
    if (states.empty()) throw InvalidModel("sign '" + name + "' has no states");
    if (self_loop.size() != states.size() || occupancy.size() != states.size())
      throw InvalidModel("sign '" + name + "' transition/occupancy size mismatch");
    for (double p : self_loop)
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidModel("sign '" + name + "' self-loop outside [0,1]");
    for (const auto& st : states)
      for (std::size_t s = 0; s < kNumStreams; ++s)
        if (st.streams[s].dim() != layout.dim(s))
          throw DimensionMismatch("sign '" + name + "' stream " + std::to_string(s + 1) +
                                  " dimension does not match layout");
  }

  bool operator==(const SignHMM&) const = default;
};

// Row-major T x N matrix of per-frame state log-likelihoods.
class EmissionMatrix {
 public:
  EmissionMatrix(std::size_t frames, std::size_t states)
      : frames_(frames), states_(states), data_(frames * states, kLogZero) {}

  double& operator()(std::size_t t, std::size_t j) { return data_[t * states_ + j]; }
  double operator()(std::size_t t, std::size_t j) const { return data_[t * states_ + j]; }
  std::size_t frames() const { return frames_; }
  std::size_t states() const { return states_; }

 private:
  std::size_t frames_, states_;
  std::vector<double> data_;
};

inline EmissionMatrix emission_matrix(const SignHMM& hmm, std::span<const Frame> frames,
                                      const StreamLayout& layout = StreamLayout::standard()) {
  EmissionMatrix e(frames.size(), hmm.num_states());
  for (std::size_t t = 0; t < frames.size(); ++t)
    for (std::size_t j = 0; j < hmm.num_states(); ++j)
      e(t, j) = state_log_likelihood(hmm.states[j], frames[t], layout);
  return e;
}

struct Alignment {
  double log_prob = kLogZero;
  std::vector<std::size_t> states;  // one state index per frame
};

// Viterbi over a left-to-right no-skip chain. The path enters state 0 at the
// first frame and occupies the last state at the final frame; no exit term is
// added. `emit(t, j)` returns the log-likelihood of frame t in state j.
template <class Emit>
Alignment viterbi_chain(std::span<const double> self_loop, std::size_t frames, Emit&& emit) {
  const std::size_t n = self_loop.size();
  if (n == 0) throw InvalidModel("empty chain");
  if (frames < n)
    throw InfeasibleSequence("sequence of " + std::to_string(frames) +
                             " frames is shorter than the " + std::to_string(n) + "-state model");
  std::vector<double> log_self(n), log_adv(n);
  for (std::size_t j = 0; j < n; ++j) {
    log_self[j] = std::log(self_loop[j]);
    log_adv[j] = std::log1p(-self_loop[j]);
  }
  std::vector<double> prev(n, kLogZero), cur(n, kLogZero);
  // back[t*n + j] == 1 when state j at frame t was entered from j-1.
  std::vector<std::uint8_t> back(frames * n, 0);
  prev[0] = emit(std::size_t{0}, std::size_t{0});
  for (std::size_t t = 1; t < frames; ++t) {
    // State j is reachable at t only if j <= t, and must still reach n-1 by T-1.
    const std::size_t lo = (t + n > frames) ? t + n - frames : 0;
    const std::size_t hi = std::min(t, n - 1);
    std::fill(cur.begin(), cur.end(), kLogZero);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double stay = prev[j] + log_self[j];
      const double enter = j > 0 ? prev[j - 1] + log_adv[j - 1] : kLogZero;
      // Ties prefer the earlier boundary.
      if (enter >= stay && enter != kLogZero) {
        cur[j] = enter;
        back[t * n + j] = 1;
      } else {
        cur[j] = stay;
      }
      if (cur[j] != kLogZero) cur[j] += emit(t, j);
    }
    std::swap(prev, cur);
  }
  Alignment out;
  out.log_prob = prev[n - 1];
  if (out.log_prob == kLogZero) return out;
  out.states.resize(frames);
  std::size_t j = n - 1;
  for (std::size_t t = frames; t-- > 0;) {
    out.states[t] = j;
    if (t > 0 && back[t * n + j]) --j;
  }
  return out;
}

inline Alignment viterbi_score(const SignHMM& hmm, const GestureSequence& seq,
                               const StreamLayout& layout = StreamLayout::standard()) {
  if (seq.frames.size() < hmm.num_states())
    throw InfeasibleSequence("sequence of " + std::to_string(seq.frames.size()) +
                             " frames cannot traverse " + std::to_string(hmm.num_states()) +
                             " states of '" + hmm.name + "'");
  const EmissionMatrix e = emission_matrix(hmm, seq.frames, layout);
  return viterbi_chain(hmm.self_loop, e.frames(),
                       [&](std::size_t t, std::size_t j) { return e(t, j); });
}

// Forward-backward output for a left-to-right chain.
struct ChainPosteriors {
  double log_likelihood = kLogZero;
  std::vector<double> gamma;          // T x N state occupancies
  std::vector<double> self_count;     // expected self transitions per state
  std::vector<double> advance_count;  // expected j -> j+1 (or exit) transitions
};

// With `include_exit`, the path must leave the last state after the final
// frame and the exit probability is part of the likelihood.
inline ChainPosteriors forward_backward(std::span<const double> self_loop, const EmissionMatrix& e,
                                        bool include_exit) {
  const std::size_t n = self_loop.size();
  const std::size_t frames = e.frames();
  ChainPosteriors out;
  out.self_count.assign(n, 0.0);
  out.advance_count.assign(n, 0.0);
  if (frames < n) return out;
  std::vector<double> ls(n), la(n);
  for (std::size_t j = 0; j < n; ++j) {
    ls[j] = std::log(self_loop[j]);
    la[j] = std::log1p(-self_loop[j]);
  }
  std::vector<double> alpha(frames * n, kLogZero), beta(frames * n, kLogZero);
  alpha[0] = e(0, 0);
  for (std::size_t t = 1; t < frames; ++t)
    for (std::size_t j = 0; j < n; ++j) {
      double a = alpha[(t - 1) * n + j] + ls[j];
      if (j > 0) a = log_add(a, alpha[(t - 1) * n + j - 1] + la[j - 1]);
      alpha[t * n + j] = a == kLogZero ? kLogZero : a + e(t, j);
    }
  const double final_term = include_exit ? la[n - 1] : 0.0;
  beta[(frames - 1) * n + n - 1] = final_term;
  for (std::size_t t = frames - 1; t-- > 0;)
    for (std::size_t j = 0; j < n; ++j) {
      double b = ls[j] + e(t + 1, j) + beta[(t + 1) * n + j];
      if (j + 1 < n) b = log_add(b, la[j] + e(t + 1, j + 1) + beta[(t + 1) * n + j + 1]);
      beta[t * n + j] = b;
    }
  out.log_likelihood = alpha[(frames - 1) * n + n - 1] + final_term;
  if (!std::isfinite(out.log_likelihood)) return out;
  const double ll = out.log_likelihood;
  out.gamma.assign(frames * n, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t j = 0; j < n; ++j) {
      const double g = alpha[t * n + j] + beta[t * n + j] - ll;
      out.gamma[t * n + j] = g == kLogZero ? 0.0 : std::exp(g);
    }
  for (std::size_t t = 0; t + 1 < frames; ++t)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = alpha[t * n + j];
      if (a == kLogZero) continue;
      out.self_count[j] += std::exp(a + ls[j] + e(t + 1, j) + beta[(t + 1) * n + j] - ll);
      if (j + 1 < n)
        out.advance_count[j] +=
            std::exp(a + la[j] + e(t + 1, j + 1) + beta[(t + 1) * n + j + 1] - ll);
    }
  if (include_exit) out.advance_count[n - 1] += out.gamma[(frames - 1) * n + n - 1];
  return out;
}

inline double forward_log_likelihood(const SignHMM& hmm, const GestureSequence& seq,
                                     bool include_exit = false,
                                     const StreamLayout& layout = StreamLayout::standard()) {
  if (seq.frames.size() < hmm.num_states()) return kLogZero;
  const EmissionMatrix e = emission_matrix(hmm, seq.frames, layout);
  return forward_backward(hmm.self_loop, e, include_exit).log_likelihood;
}

struct TrainOptions {
  std::size_t num_states = 3;
  std::size_t mixtures = 1;
  std::size_t max_iterations = 20;
  double tolerance = 1e-4;  // relative likelihood improvement
  double variance_floor = kDefaultVarianceFloor;
  double min_self_loop = 1e-3;
  double max_self_loop = 1.0 - 1e-3;
};

struct TrainedHMM {
  SignHMM model;
  // Training-set log-likelihood (with exit) evaluated before each update,
  // followed by the value for the final model.
  std::vector<double> history;
  std::size_t skipped_sequences = 0;
};

namespace detail {

// Moment-matched initial density for the frames assigned to one state.
inline StreamDensity initial_density(const std::vector<std::span<const double>>& xs, std::size_t dim,
                                     std::size_t mixtures, double variance_floor) {
  std::vector<double> mean(dim, 0.0), var(dim, 0.0);
  for (const auto& x : xs)
    for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
  for (double& m : mean) m /= double(xs.size());
  for (const auto& x : xs)
    for (std::size_t d = 0; d < dim; ++d) var[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
  for (double& v : var) v = std::max(v / double(xs.size()), variance_floor);
  if (mixtures == 1) return StreamDensity::gaussian(std::move(mean), std::move(var));
  // Components start spread symmetrically along +-0.5 sd so EM can separate them.
  std::vector<double> w(mixtures, 1.0 / double(mixtures));
  std::vector<double> mu(dim * mixtures), vv(dim * mixtures);
  for (std::size_t m = 0; m < mixtures; ++m) {
    const double offset = (double(m) - 0.5 * double(mixtures - 1)) / double(mixtures);
    for (std::size_t d = 0; d < dim; ++d) {
      const double sign = (d % 2 == 0) ? 1.0 : -1.0;
      mu[m * dim + d] = mean[d] + sign * offset * std::sqrt(var[d]);
      vv[m * dim + d] = var[d];
    }
  }
  return StreamDensity(dim, std::move(w), std::move(mu), std::move(vv));
}

inline double clamp_self_loop(double self, double adv, const TrainOptions& opt) {
  const double total = self + adv;
  const double p = total > 0.0 ? self / total : 0.5;
  return std::clamp(p, opt.min_self_loop, opt.max_self_loop);
}

}  // namespace detail

// Uniform-segmentation initialization followed by Baum-Welch re-estimation.
// Sequences shorter than the state count are skipped.
inline TrainedHMM baum_welch_train(std::span<const GestureSequence> seqs, const std::string& name,
                                   const TrainOptions& opt,
                                   const StreamLayout& layout = StreamLayout::standard()) {
  const std::size_t n = opt.num_states;
  if (n == 0 || opt.mixtures == 0) throw InvalidModel("state and mixture counts must be positive");
  if (seqs.empty()) throw DataError("no training sequences for '" + name + "'");
  std::vector<const GestureSequence*> usable;
  TrainedHMM result;
  for (const auto& s : seqs) {
    if (s.frames.size() >= n)
      usable.push_back(&s);
    else
      ++result.skipped_sequences;
  }
  if (usable.empty())
    throw DataError("every training sequence for '" + name + "' is shorter than " +
                    std::to_string(n) + " frames");

  SignHMM hmm;
  hmm.name = name;
  hmm.states.resize(n);
  hmm.self_loop.assign(n, 0.5);
  hmm.occupancy.assign(n, 0.0);
  {
    std::vector<double> frames_in_state(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t s = 0; s < kNumStreams; ++s) {
        std::vector<std::span<const double>> xs;
        for (const auto* seq : usable) {
          const std::size_t len = seq->frames.size();
          const std::size_t b = j * len / n, e = (j + 1) * len / n;
          for (std::size_t t = b; t < e; ++t) xs.push_back(stream_view(seq->frames[t], s, layout));
        }
        if (s == 0) frames_in_state[j] = double(xs.size());
        hmm.states[j].streams[s] =
            detail::initial_density(xs, layout.dim(s), opt.mixtures, opt.variance_floor);
      }
      const double avg_len = frames_in_state[j] / double(usable.size());
      hmm.self_loop[j] =
          std::clamp(1.0 - 1.0 / std::max(avg_len, 1.0), opt.min_self_loop, opt.max_self_loop);
      hmm.occupancy[j] = frames_in_state[j];
    }
  }

  double prev_ll = kLogZero;
  for (std::size_t iter = 0;; ++iter) {
    std::vector<std::array<DensityAccumulator, kNumStreams>> acc(n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t s = 0; s < kNumStreams; ++s)
        acc[j][s] = DensityAccumulator(layout.dim(s), hmm.states[j].streams[s].components());
    std::vector<double> self_c(n, 0.0), adv_c(n, 0.0), occ(n, 0.0);
    double total_ll = 0.0;
    for (const auto* seq : usable) {
      const EmissionMatrix e = emission_matrix(hmm, seq->frames, layout);
      const ChainPosteriors post = forward_backward(hmm.self_loop, e, /*include_exit=*/true);
      if (!std::isfinite(post.log_likelihood)) continue;
      total_ll += post.log_likelihood;
      for (std::size_t j = 0; j < n; ++j) {
        self_c[j] += post.self_count[j];
        adv_c[j] += post.advance_count[j];
      }
      for (std::size_t t = 0; t < seq->frames.size(); ++t)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = post.gamma[t * n + j];
          if (g <= 0.0) continue;
          occ[j] += g;
          for (std::size_t s = 0; s < kNumStreams; ++s)
            acc[j][s].add(hmm.states[j].streams[s], stream_view(seq->frames[t], s, layout), g);
        }
    }
    result.history.push_back(total_ll);
    const bool converged =
        iter > 0 && std::abs(total_ll - prev_ll) <= opt.tolerance * std::abs(prev_ll);
    if (converged || iter >= opt.max_iterations) break;
    prev_ll = total_ll;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t s = 0; s < kNumStreams; ++s)
        hmm.states[j].streams[s] = acc[j][s].estimate(hmm.states[j].streams[s], opt.variance_floor);
      hmm.self_loop[j] = detail::clamp_self_loop(self_c[j], adv_c[j], opt);
      hmm.occupancy[j] = occ[j];
    }
  }
  result.model = std::move(hmm);
  return result;
}

inline double per_frame_log_likelihood(const SignHMM& hmm, std::span<const GestureSequence> seqs,
                                       const StreamLayout& layout = StreamLayout::standard()) {
  double ll = 0.0;
  std::size_t frames = 0;
  for (const auto& s : seqs) {
    const double l = forward_log_likelihood(hmm, s, false, layout);
    if (!std::isfinite(l)) return kLogZero;
    ll += l;
    frames += s.frames.size();
  }
  return frames ? ll / double(frames) : kLogZero;
}

struct StateCountChoice {
  std::size_t num_states = 3;
  double held_out_3 = kLogZero;
  double held_out_5 = kLogZero;
};

// Holds out the last repetition, trains 3- and 5-state models on the rest and
// keeps 5 only when its held-out per-frame log-likelihood is higher by more
// than `margin` (relative). Fewer than two sequences -> 3.
inline StateCountChoice select_state_count(std::span<const GestureSequence> seqs,
                                           TrainOptions opt = {}, double margin = 1e-2,
                                           const StreamLayout& layout = StreamLayout::standard()) {
  StateCountChoice out;
  if (seqs.size() < 2) return out;
  const auto train = seqs.first(seqs.size() - 1);
  const auto held = seqs.last(1);
  auto score = [&](std::size_t states) {
    opt.num_states = states;
    try {
      const TrainedHMM t = baum_welch_train(train, "select", opt, layout);
      return per_frame_log_likelihood(t.model, held, layout);
    } catch (const DataError&) {
      return kLogZero;
    }
  };
  out.held_out_3 = score(3);
  out.held_out_5 = score(5);
  if (std::isfinite(out.held_out_5) &&
      (!std::isfinite(out.held_out_3) ||
       out.held_out_5 > out.held_out_3 + margin * std::abs(out.held_out_3)))
    out.num_states = 5;
  return out;
}

}  // namespace signrec
