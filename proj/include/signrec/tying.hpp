#pragma once

// Stream state tying: every stream density of every (sign, state) is replaced
// by one of K_s shared patterns for that stream. A frame is then scored by
// evaluating the sum of K_s pattern densities once, after which each state's
// log-likelihood is six table lookups and five additions.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "signrec/density.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/kmeans.hpp"

namespace signrec {

// Pattern counts per stream, in layout order.
using PatternCounts = std::array<std::size_t, kNumStreams>;
using PatternRow = std::array<std::uint32_t, kNumStreams>;

struct TiedCodebook {
  std::array<std::vector<StreamDensity>, kNumStreams> patterns;

  std::size_t pattern_count(std::size_t s) const { return patterns[s].size(); }
  std::size_t total_patterns() const {
    std::size_t n = 0;
    for (const auto& p : patterns) n += p.size();
    return n;
  }
  bool operator==(const TiedCodebook&) const = default;
};

// Topology of a sign without its emission densities.
struct SignSkeleton {
  std::string name;
  std::vector<double> self_loop;

  std::size_t num_states() const { return self_loop.size(); }
  double log_self(std::size_t j) const { return std::log(self_loop[j]); }
  double log_advance(std::size_t j) const { return std::log1p(-self_loop[j]); }
  double log_exit() const { return log_advance(self_loop.size() - 1); }
  bool operator==(const SignSkeleton&) const = default;
};

struct TiedModelSet {
  std::vector<SignSkeleton> signs;
  std::vector<std::vector<PatternRow>> mapping;  // [sign][state] -> pattern per stream
  TiedCodebook codebook;

  std::size_t num_signs() const { return signs.size(); }
  std::size_t num_states(SignId sign) const { return signs.at(sign).num_states(); }

  const StreamDensity& pattern(SignId sign, std::size_t state, std::size_t s) const {
    return codebook.patterns[s][mapping.at(sign).at(state)[s]];
  }

  // The tied state densities gathered back into a StateModel.
  StateModel state_model(SignId sign, std::size_t state) const {
    StateModel m;
    for (std::size_t s = 0; s < kNumStreams; ++s) m.streams[s] = pattern(sign, state, s);
    return m;
  }

  void validate() const {
    if (mapping.size() != signs.size()) throw InvalidModel("tied mapping does not cover every sign");
    for (std::size_t i = 0; i < signs.size(); ++i) {
      if (mapping[i].size() != signs[i].num_states())
        throw InvalidModel("tied mapping for '" + signs[i].name + "' has wrong state count");
      for (const auto& row : mapping[i])
        for (std::size_t s = 0; s < kNumStreams; ++s)
          if (row[s] >= codebook.patterns[s].size())
            throw InvalidModel("tied mapping refers to a missing pattern");
    }
  }

  bool operator==(const TiedModelSet&) const = default;
};

struct TyingOptions {
  std::uint64_t seed = 1;
  std::size_t max_iterations = 50;
  double variance_floor = kDefaultVarianceFloor;
};

namespace detail {

inline std::vector<double> density_key(const StreamDensity& d) {
  std::vector<double> key;
  key.reserve(1 + d.components() + 2 * d.means().size());
  key.push_back(double(d.components()));
  key.insert(key.end(), d.weights().begin(), d.weights().end());
  key.insert(key.end(), d.means().begin(), d.means().end());
  key.insert(key.end(), d.variances().begin(), d.variances().end());
  return key;
}

// Occupancy-weighted moment pooling. Members with equal component counts are
// pooled component by component; otherwise into a single Gaussian.
inline StreamDensity pool_densities(std::span<const StreamDensity* const> members,
                                    std::span<const double> weights, double variance_floor) {
  if (members.size() == 1) return *members[0];
  const std::size_t dim = members[0]->dim();
  std::size_t mcount = members[0]->components();
  for (const auto* m : members)
    if (m->components() != mcount) mcount = 0;
  const bool aligned = mcount != 0;
  if (!aligned) mcount = 1;

  std::vector<double> w(mcount, 0.0), mu(mcount * dim, 0.0), var(mcount * dim, 0.0);
  std::vector<double> mass(mcount, 0.0);
  auto component = [&](const StreamDensity& d, std::size_t m, auto&& fn) {
    if (aligned) {
      fn(d.weight(m), d.mean(m), d.variance(m));
    } else {
      const auto am = d.average_mean();
      // Second moment of the whole mixture around its mean.
      std::vector<double> av(dim, 0.0);
      for (std::size_t c = 0; c < d.components(); ++c)
        for (std::size_t k = 0; k < dim; ++k) {
          const double diff = d.mean(c)[k] - am[k];
          av[k] += d.weight(c) * (d.variance(c)[k] + diff * diff);
        }
      fn(1.0, std::span<const double>(am), std::span<const double>(av));
    }
  };
  double total = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) total += weights[i];
  for (std::size_t m = 0; m < mcount; ++m) {
    for (std::size_t i = 0; i < members.size(); ++i)
      component(*members[i], m, [&](double cw, std::span<const double> cm, std::span<const double>) {
        const double g = weights[i] * cw;
        mass[m] += g;
        for (std::size_t k = 0; k < dim; ++k) mu[m * dim + k] += g * cm[k];
      });
    w[m] = mass[m] / total;
    if (mass[m] > 0.0)
      for (std::size_t k = 0; k < dim; ++k) mu[m * dim + k] /= mass[m];
    for (std::size_t i = 0; i < members.size(); ++i)
      component(*members[i], m,
                [&](double cw, std::span<const double> cm, std::span<const double> cv) {
                  const double g = weights[i] * cw;
                  for (std::size_t k = 0; k < dim; ++k) {
                    const double diff = cm[k] - mu[m * dim + k];
                    var[m * dim + k] += g * (cv[k] + diff * diff);
                  }
                });
    for (std::size_t k = 0; k < dim; ++k)
      var[m * dim + k] = std::max(mass[m] > 0.0 ? var[m * dim + k] / mass[m] : 1.0, variance_floor);
  }
  double wsum = 0.0;
  for (double x : w) wsum += x;
  for (double& x : w) x /= wsum;
  return StreamDensity(dim, std::move(w), std::move(mu), std::move(var));
}

struct ClusterOutcome {
  std::vector<StreamDensity> patterns;
  std::vector<std::uint32_t> assignment;  // one entry per input density
  std::size_t distinct = 0;
};

// Clusters densities (with occupancy weights) into at most k patterns.
inline ClusterOutcome cluster_densities(std::span<const StreamDensity* const> densities,
                                        std::span<const double> occupancy, std::size_t k,
                                        std::uint64_t seed, std::size_t max_iterations,
                                        double variance_floor) {
  ClusterOutcome out;
  std::map<std::vector<double>, std::uint32_t> index;
  std::vector<const StreamDensity*> distinct;
  std::vector<double> distinct_weight;
  std::vector<std::uint32_t> entry_to_distinct(densities.size());
  for (std::size_t i = 0; i < densities.size(); ++i) {
    auto [it, inserted] = index.try_emplace(density_key(*densities[i]), std::uint32_t(distinct.size()));
    if (inserted) {
      distinct.push_back(densities[i]);
      distinct_weight.push_back(0.0);
    }
    distinct_weight[it->second] += std::max(occupancy[i], 1e-6);
    entry_to_distinct[i] = it->second;
  }
  out.distinct = distinct.size();
  k = std::min(k, distinct.size());

  if (k == distinct.size()) {
    for (const auto* d : distinct) out.patterns.push_back(*d);
    out.assignment = entry_to_distinct;
    return out;
  }

  const std::size_t dim = distinct[0]->dim();
  detail::WeightedPoints pts;
  pts.dim = dim;
  pts.weights = distinct_weight;
  std::vector<double> pooled(dim, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    const auto m = distinct[i]->average_mean();
    pts.coords.insert(pts.coords.end(), m.begin(), m.end());
    const auto v = distinct[i]->average_variance();
    for (std::size_t d = 0; d < dim; ++d) pooled[d] += distinct_weight[i] * v[d];
    wsum += distinct_weight[i];
  }
  std::vector<double> inv_scale(dim);
  for (std::size_t d = 0; d < dim; ++d) inv_scale[d] = wsum / std::max(pooled[d], 1e-300);

  const auto cluster = detail::kmeans(pts, inv_scale, k, seed, max_iterations);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < cluster.size(); ++i) members[cluster[i]].push_back(i);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<const StreamDensity*> ds;
    std::vector<double> ws;
    for (std::size_t i : members[c]) {
      ds.push_back(distinct[i]);
      ws.push_back(distinct_weight[i]);
    }
    out.patterns.push_back(pool_densities(ds, ws, variance_floor));
  }

  // Final assignment: nearest pattern mean under the same metric.
  std::vector<std::vector<double>> centres;
  for (const auto& p : out.patterns) centres.push_back(p.average_mean());
  std::vector<std::uint32_t> nearest(distinct.size());
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double d = detail::scaled_distance2(pts.row(i), centres[c], inv_scale);
      if (d < best) {
        best = d;
        nearest[i] = std::uint32_t(c);
      }
    }
  }
  out.assignment.resize(densities.size());
  for (std::size_t i = 0; i < densities.size(); ++i) out.assignment[i] = nearest[entry_to_distinct[i]];
  return out;
}

}  // namespace detail

// Number of distinct stream densities per stream; tying with these counts is lossless.
inline PatternCounts max_pattern_counts(std::span<const SignHMM> models) {
  PatternCounts out{};
  for (std::size_t s = 0; s < kNumStreams; ++s) {
    std::map<std::vector<double>, int> seen;
    for (const auto& m : models)
      for (const auto& st : m.states) seen.emplace(detail::density_key(st.streams[s]), 0);
    out[s] = seen.size();
  }
  return out;
}

// Ties all (sign, state) densities stream by stream. Counts larger than the
// number of distinct densities are reduced, with a message in `warnings`.
inline TiedModelSet cluster_stream_states(std::span<const SignHMM> models, const PatternCounts& counts,
                                          const TyingOptions& opt = {},
                                          std::vector<std::string>* warnings = nullptr) {
  if (models.empty()) throw DataError("no sign models to tie");
  TiedModelSet out;
  for (const auto& m : models) {
    m.validate();
    out.signs.push_back({m.name, m.self_loop});
    out.mapping.emplace_back(m.num_states());
  }
  for (std::size_t s = 0; s < kNumStreams; ++s) {
    if (counts[s] == 0) throw InvalidModel("pattern count must be at least 1");
    std::vector<const StreamDensity*> densities;
    std::vector<double> occupancy;
    for (const auto& m : models)
      for (std::size_t j = 0; j < m.num_states(); ++j) {
        densities.push_back(&m.states[j].streams[s]);
        occupancy.push_back(m.occupancy[j]);
      }
    auto res = detail::cluster_densities(densities, occupancy, counts[s], opt.seed + s,
                                         opt.max_iterations, opt.variance_floor);
    if (counts[s] > res.distinct && warnings)
      warnings->push_back("stream " + std::to_string(s + 1) + ": pattern count " +
                          std::to_string(counts[s]) + " reduced to " + std::to_string(res.distinct));
    out.codebook.patterns[s] = std::move(res.patterns);
    std::size_t e = 0;
    for (std::size_t i = 0; i < models.size(); ++i)
      for (std::size_t j = 0; j < models[i].num_states(); ++j) out.mapping[i][j][s] = res.assignment[e++];
  }
  return out;
}

struct FrameScoreTable {
  std::array<std::vector<double>, kNumStreams> scores;
  std::size_t density_evaluations = 0;

  double operator()(std::size_t s, std::size_t pattern) const { return scores[s][pattern]; }
};

inline void fill_frame_score_table(const TiedCodebook& codebook, const Frame& frame,
                                   FrameScoreTable& table,
                                   const StreamLayout& layout = StreamLayout::standard()) {
  table.density_evaluations = 0;
  for (std::size_t s = 0; s < kNumStreams; ++s) {
    const auto x = stream_view(frame, s, layout);
    const auto& pats = codebook.patterns[s];
    table.scores[s].resize(pats.size());
    for (std::size_t i = 0; i < pats.size(); ++i) table.scores[s][i] = pats[i].log_likelihood(x);
    table.density_evaluations += pats.size();
  }
}

inline FrameScoreTable frame_score_table(const TiedCodebook& codebook, const Frame& frame,
                                         const StreamLayout& layout = StreamLayout::standard()) {
  FrameScoreTable t;
  fill_frame_score_table(codebook, frame, t, layout);
  return t;
}

struct OpCounters {
  std::size_t lookups = 0;
  std::size_t additions = 0;
};

inline double tied_state_log_likelihood(const TiedModelSet& tms, const FrameScoreTable& table,
                                        SignId sign, std::size_t state,
                                        OpCounters* counters = nullptr) {
  if (sign >= tms.mapping.size()) throw InvalidModel("unknown sign id " + std::to_string(sign));
  const auto& states = tms.mapping[sign];
  if (state >= states.size())
    throw InvalidModel("sign " + std::to_string(sign) + " has no state " + std::to_string(state));
  const PatternRow& row = states[state];
  double acc = table.scores[0][row[0]];
  for (std::size_t s = 1; s < kNumStreams; ++s) acc += table.scores[s][row[s]];
  if (counters) {
    counters->lookups += kNumStreams;
    counters->additions += kNumStreams - 1;
  }
  return acc;
}

// Scores all tied states of a frame, sharing partial stream sums between
// states whose pattern rows have a common prefix. Sums are formed in stream
// order, so results are bit-identical to tied_state_log_likelihood.
class StateScorer {
 public:
  explicit StateScorer(const TiedModelSet& tms) {
    offsets_.reserve(tms.num_signs() + 1);
    std::array<std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>, kNumStreams> nodes;
    for (std::size_t i = 0; i < tms.num_signs(); ++i) {
      offsets_.push_back(leaf_.size());
      for (const PatternRow& row : tms.mapping[i]) {
        std::uint32_t parent = 0;
        for (std::size_t s = 0; s < kNumStreams; ++s) {
          auto [it, inserted] =
              nodes[s].try_emplace({parent, row[s]}, std::uint32_t(levels_[s].size()));
          if (inserted) levels_[s].push_back({parent, row[s]});
          parent = it->second;
        }
        leaf_.push_back(parent);
      }
    }
    offsets_.push_back(leaf_.size());
  }

  std::size_t num_states() const { return leaf_.size(); }
  std::size_t flat_index(SignId sign, std::size_t state) const { return offsets_[sign] + state; }
  std::size_t offset(SignId sign) const { return offsets_[sign]; }

  // Additions per frame: one per node below the first stream.
  std::size_t additions_per_frame() const {
    std::size_t n = 0;
    for (std::size_t s = 1; s < kNumStreams; ++s) n += levels_[s].size();
    return n;
  }

  void score(const FrameScoreTable& table, std::vector<double>& out) const {
    std::array<std::vector<double>, kNumStreams> values;
    values[0].resize(levels_[0].size());
    for (std::size_t i = 0; i < levels_[0].size(); ++i)
      values[0][i] = table.scores[0][levels_[0][i].pattern];
    for (std::size_t s = 1; s < kNumStreams; ++s) {
      values[s].resize(levels_[s].size());
      for (std::size_t i = 0; i < levels_[s].size(); ++i)
        values[s][i] = values[s - 1][levels_[s][i].parent] + table.scores[s][levels_[s][i].pattern];
    }
    out.resize(leaf_.size());
    for (std::size_t i = 0; i < leaf_.size(); ++i) out[i] = values[kNumStreams - 1][leaf_[i]];
  }

 private:
  struct Node {
    std::uint32_t parent;
    std::uint32_t pattern;
  };
  std::array<std::vector<Node>, kNumStreams> levels_;
  std::vector<std::uint32_t> leaf_;
  std::vector<std::size_t> offsets_;
};

}  // namespace signrec
