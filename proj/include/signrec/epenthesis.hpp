#pragma once

// Movement-epenthesis models CD(v|u): short left-to-right HMMs placed between
// the last state of sign u and the first state of sign v. The last state of u
// always enters CD(v|u) (entry probability 1).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "signrec/density.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/kmeans.hpp"
#include "signrec/tying.hpp"

namespace signrec {

using SignPair = std::pair<SignId, SignId>;

struct TransitionModel {
  static constexpr double kEntryProbability = 1.0;

  SignId from = 0;
  SignId to = 0;
  std::vector<StateModel> states;
  std::vector<double> self_loop;

  std::size_t num_states() const { return states.size(); }
  double log_self(std::size_t j) const { return std::log(self_loop[j]); }
  double log_advance(std::size_t j) const { return std::log1p(-self_loop[j]); }
  double log_exit() const { return log_advance(states.size() - 1); }

  bool operator==(const TransitionModel&) const = default;
};

// A set of (possibly shared) transition models and the pair -> model map.
struct TransitionSet {
  std::size_t num_states = 1;
  std::vector<TransitionModel> models;
  std::map<SignPair, std::uint32_t> pair_model;

  const TransitionModel* find(SignId u, SignId v) const {
    const auto it = pair_model.find({u, v});
    return it == pair_model.end() ? nullptr : &models[it->second];
  }
  std::size_t num_pairs() const { return pair_model.size(); }

  bool operator==(const TransitionSet&) const = default;
};

inline StreamDensity average_densities(const StreamDensity& a, const StreamDensity& b) {
  if (a.components() != b.components())
    throw InvalidModel("cannot interpolate mixtures of different sizes (" +
                       std::to_string(a.components()) + " vs " + std::to_string(b.components()) + ")");
  if (a.dim() != b.dim()) throw DimensionMismatch("cannot interpolate densities of different dimension");
  auto avg = [](std::span<const double> x, std::span<const double> y) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * (x[i] + y[i]);
    return out;
  };
  return StreamDensity(a.dim(), avg(a.weights(), b.weights()), avg(a.means(), b.means()),
                       avg(a.variances(), b.variances()));
}

inline StateModel average_states(const StateModel& a, const StateModel& b) {
  StateModel out;
  for (std::size_t s = 0; s < kNumStreams; ++s) out.streams[s] = average_densities(a.streams[s], b.streams[s]);
  return out;
}

// One-state model halfway between u's last state and v's first state.
inline TransitionModel interpolate_states(const StateModel& u_last, double u_self, const StateModel& v_first,
                                          double v_self, SignId u = 0, SignId v = 0) {
  TransitionModel m;
  m.from = u;
  m.to = v;
  m.states.push_back(average_states(u_last, v_first));
  m.self_loop.push_back(0.5 * (u_self + v_self));
  return m;
}

inline TransitionModel interpolate_transition(const SignHMM& u, const SignHMM& v, SignId uid = 0,
                                              SignId vid = 0) {
  return interpolate_states(u.states.back(), u.self_loop.back(), v.states.front(), v.self_loop.front(), uid,
                            vid);
}

// Replicates a one-state model n times.
inline TransitionModel replicate_states(const TransitionModel& one, std::size_t n) {
  TransitionModel m;
  m.from = one.from;
  m.to = one.to;
  m.states.assign(n, one.states.front());
  m.self_loop.assign(n, one.self_loop.front());
  return m;
}

struct TransitionTrainOptions {
  std::size_t num_states = 1;
  std::size_t max_iterations = 10;
  double tolerance = 1e-4;
  double variance_floor = kDefaultVarianceFloor;
  double min_self_loop = 1e-3;
  double max_self_loop = 1.0 - 1e-3;
  // Models whose mean occupancy per occurrence does not exceed the forced
  // minimum (one frame per state) by this much keep their initialization.
  double min_excess_occupancy = 0.5;
  // Pairs seen fewer times than this keep their initialization.
  std::size_t min_occurrences = 5;
};

struct TransitionTraining {
  TransitionSet set;
  std::vector<double> history;       // linked-HMM log-likelihood per EM pass
  std::vector<SignPair> untrained;   // pairs that kept the interpolated initialization
  std::size_t skipped_sentences = 0;
};

// Embedded training of the transition models of every adjacent sign pair seen
// in `sentences`, with the sign models held fixed.
inline TransitionTraining train_transitions(std::span<const GestureSequence> sentences,
                                            std::span<const SignHMM> signs,
                                            const TransitionTrainOptions& opt,
                                            const StreamLayout& layout = StreamLayout::standard()) {
  if (opt.num_states != 1 && opt.num_states != 3)
    throw InvalidModel("transition models have 1 or 3 states");
  std::unordered_map<std::string, SignId> ids;
  for (SignId i = 0; i < signs.size(); ++i) ids.emplace(signs[i].name, i);

  struct Sentence {
    const GestureSequence* seq;
    std::vector<SignId> words;
    EmissionMatrix sign_emissions{0, 0};  // frozen sign-state scores, chain order minus CD states
  };
  std::vector<Sentence> data;
  TransitionTraining out;
  out.set.num_states = opt.num_states;
  std::map<SignPair, std::size_t> occurrences;
  for (const auto& seq : sentences) {
    Sentence s{&seq, {}, {0, 0}};
    for (const auto& name : seq.label) {
      const auto it = ids.find(name);
      if (it == ids.end()) throw DataError("sentence refers to unknown sign '" + name + "'");
      s.words.push_back(it->second);
    }
    if (s.words.size() < 2) continue;
    std::size_t min_frames = (s.words.size() - 1) * opt.num_states;
    for (SignId w : s.words) min_frames += signs[w].num_states();
    if (seq.frames.size() < min_frames) {
      ++out.skipped_sentences;
      continue;
    }
    for (std::size_t i = 0; i + 1 < s.words.size(); ++i) ++occurrences[{s.words[i], s.words[i + 1]}];
    data.push_back(std::move(s));
  }

  std::vector<TransitionModel> initial;
  for (const auto& [pair, count] : occurrences) {
    TransitionModel m = interpolate_transition(signs[pair.first], signs[pair.second], pair.first, pair.second);
    if (opt.num_states == 3) m = replicate_states(m, 3);
    out.set.pair_model.emplace(pair, std::uint32_t(initial.size()));
    initial.push_back(std::move(m));
  }
  out.set.models = initial;
  if (data.empty()) return out;

  // Frozen sign emissions per sentence: columns follow the words' states in order.
  for (auto& s : data) {
    std::size_t cols = 0;
    for (SignId w : s.words) cols += signs[w].num_states();
    s.sign_emissions = EmissionMatrix(s.seq->frames.size(), cols);
    for (std::size_t t = 0; t < s.seq->frames.size(); ++t) {
      std::size_t c = 0;
      for (SignId w : s.words)
        for (const auto& st : signs[w].states) s.sign_emissions(t, c++) = state_log_likelihood(st, s.seq->frames[t], layout);
    }
  }

  const std::size_t n_cd = opt.num_states;
  std::vector<double> occupancy(out.set.models.size(), 0.0);
  double prev_ll = kLogZero;
  for (std::size_t iter = 0;; ++iter) {
    std::vector<std::vector<std::array<DensityAccumulator, kNumStreams>>> acc(out.set.models.size());
    std::vector<std::vector<double>> self_c(out.set.models.size(), std::vector<double>(n_cd, 0.0));
    std::vector<std::vector<double>> adv_c = self_c;
    std::fill(occupancy.begin(), occupancy.end(), 0.0);
    for (std::size_t m = 0; m < out.set.models.size(); ++m) {
      acc[m].resize(n_cd);
      for (std::size_t j = 0; j < n_cd; ++j)
        for (std::size_t s = 0; s < kNumStreams; ++s)
          acc[m][j][s] = DensityAccumulator(layout.dim(s), out.set.models[m].states[j].streams[s].components());
    }
    double total_ll = 0.0;
    for (const auto& s : data) {
      // Chain: sign states interleaved with CD states.
      struct Column {
        int model = -1;  // CD model index or -1 for a sign state
        std::size_t state = 0;
        std::size_t sign_column = 0;
      };
      std::vector<Column> cols;
      std::vector<double> self_loop;
      std::size_t sc = 0;
      for (std::size_t i = 0; i < s.words.size(); ++i) {
        const SignHMM& w = signs[s.words[i]];
        for (std::size_t j = 0; j < w.num_states(); ++j) {
          cols.push_back({-1, j, sc++});
          self_loop.push_back(w.self_loop[j]);
        }
        if (i + 1 == s.words.size()) break;
        const int m = int(out.set.pair_model.at({s.words[i], s.words[i + 1]}));
        for (std::size_t j = 0; j < n_cd; ++j) {
          cols.push_back({m, j, 0});
          self_loop.push_back(out.set.models[m].self_loop[j]);
        }
      }
      const std::size_t frames = s.seq->frames.size();
      EmissionMatrix e(frames, cols.size());
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < cols.size(); ++c)
          e(t, c) = cols[c].model < 0
                        ? s.sign_emissions(t, cols[c].sign_column)
                        : state_log_likelihood(out.set.models[cols[c].model].states[cols[c].state], s.seq->frames[t], layout);
      const ChainPosteriors post = forward_backward(self_loop, e, /*include_exit=*/false);
      if (!std::isfinite(post.log_likelihood)) continue;
      total_ll += post.log_likelihood;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c].model < 0) continue;
        const auto m = std::size_t(cols[c].model);
        const std::size_t j = cols[c].state;
        self_c[m][j] += post.self_count[c];
        adv_c[m][j] += post.advance_count[c];
        for (std::size_t t = 0; t < frames; ++t) {
          const double g = post.gamma[t * cols.size() + c];
          if (g <= 0.0) continue;
          occupancy[m] += g;
          for (std::size_t st = 0; st < kNumStreams; ++st)
            acc[m][j][st].add(out.set.models[m].states[j].streams[st], stream_view(s.seq->frames[t], st, layout), g);
        }
      }
    }
    out.history.push_back(total_ll);
    const bool converged = iter > 0 && std::abs(total_ll - prev_ll) <= opt.tolerance * std::abs(prev_ll);
    if (converged || iter >= opt.max_iterations) break;
    prev_ll = total_ll;
    for (std::size_t m = 0; m < out.set.models.size(); ++m) {
      auto& model = out.set.models[m];
      for (std::size_t j = 0; j < n_cd; ++j) {
        for (std::size_t st = 0; st < kNumStreams; ++st)
          model.states[j].streams[st] = acc[m][j][st].estimate(model.states[j].streams[st], opt.variance_floor);
        const double total = self_c[m][j] + adv_c[m][j];
        if (total > 0.0)
          model.self_loop[j] = std::clamp(self_c[m][j] / total, opt.min_self_loop, opt.max_self_loop);
      }
    }
  }

  for (const auto& [pair, index] : out.set.pair_model) {
    const std::size_t seen = occurrences.at(pair);
    const double per_occurrence = occupancy[index] / double(seen);
    if (seen < opt.min_occurrences || per_occurrence < double(n_cd) + opt.min_excess_occupancy) {
      out.set.models[index] = initial[index];
      out.untrained.push_back(pair);
    }
  }
  return out;
}

// Clusters transition models into at most k shared models. Models are compared
// by their concatenated state means, scaled by the pooled variance.
inline TransitionSet tie_transitions(const TransitionSet& set, std::size_t k, std::uint64_t seed = 1,
                                     std::vector<std::string>* warnings = nullptr,
                                     double variance_floor = kDefaultVarianceFloor) {
  if (set.models.empty()) throw DataError("no transition models to tie");
  if (k == 0) throw InvalidModel("transition model count must be at least 1");
  const std::size_t count = set.models.size();
  if (k > count && warnings)
    warnings->push_back("transition model count " + std::to_string(k) + " reduced to " + std::to_string(count));
  if (k >= count) return set;

  const std::size_t n = set.num_states;
  detail::WeightedPoints pts;
  pts.weights.assign(count, 1.0);
  std::vector<double> pooled;
  for (const auto& m : set.models) {
    if (m.num_states() != n) throw InvalidModel("transition models differ in state count");
    std::size_t d0 = 0;
    for (const auto& st : m.states)
      for (const auto& dens : st.streams) {
        const auto mu = dens.average_mean();
        const auto var = dens.average_variance();
        pts.coords.insert(pts.coords.end(), mu.begin(), mu.end());
        if (pooled.size() < d0 + var.size()) pooled.resize(d0 + var.size(), 0.0);
        for (std::size_t d = 0; d < var.size(); ++d) pooled[d0 + d] += var[d];
        d0 += var.size();
      }
    pts.dim = d0;
  }
  std::vector<double> inv_scale(pts.dim);
  for (std::size_t d = 0; d < pts.dim; ++d) inv_scale[d] = double(count) / std::max(pooled[d], 1e-300);
  const auto cluster = detail::kmeans(pts, inv_scale, k, seed);

  TransitionSet out;
  out.num_states = n;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < count; ++i)
      if (cluster[i] == c) members.push_back(i);
    TransitionModel shared;
    shared.from = set.models[members.front()].from;
    shared.to = set.models[members.front()].to;
    shared.states.resize(n);
    shared.self_loop.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t s = 0; s < kNumStreams; ++s) {
        std::vector<const StreamDensity*> ds;
        for (std::size_t i : members) ds.push_back(&set.models[i].states[j].streams[s]);
        const std::vector<double> ws(ds.size(), 1.0);
        shared.states[j].streams[s] = detail::pool_densities(ds, ws, variance_floor);
      }
      for (std::size_t i : members) shared.self_loop[j] += set.models[i].self_loop[j] / double(members.size());
    }
    out.models.push_back(std::move(shared));
  }
  for (const auto& [pair, index] : set.pair_model) out.pair_model.emplace(pair, std::uint32_t(cluster[index]));
  return out;
}

}  // namespace signrec
