#pragma once

// Random model generators and brute-force reference implementations shared by
// the test suites. The references are written independently of the library
// search code: direct path enumeration, plain dynamic programs and exhaustive
// alignment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "signrec/signrec.hpp"

namespace testing_support {

using namespace signrec;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline StreamDensity random_density(std::mt19937_64& rng, std::size_t dim, std::size_t mixtures = 1,
                                    double spread = 0.3) {
  std::vector<double> w(mixtures), mu, var;
  double total = 0.0;
  for (double& x : w) total += x = uniform(rng, 0.2, 1.0);
  for (double& x : w) x /= total;
  for (std::size_t m = 0; m < mixtures; ++m)
    for (std::size_t d = 0; d < dim; ++d) {
      mu.push_back(0.5 + uniform(rng, -spread, spread));
      var.push_back(uniform(rng, 0.01, 0.05));
    }
  return StreamDensity(dim, std::move(w), std::move(mu), std::move(var));
}

inline StateModel random_state(std::mt19937_64& rng, std::size_t mixtures = 1, double spread = 0.3) {
  StateModel s;
  for (std::size_t k = 0; k < kNumStreams; ++k)
    s.streams[k] = random_density(rng, StreamLayout::standard().dim(k), mixtures, spread);
  return s;
}

inline SignHMM random_sign(std::mt19937_64& rng, std::size_t states, const std::string& name,
                           std::size_t mixtures = 1) {
  SignHMM h;
  h.name = name;
  for (std::size_t j = 0; j < states; ++j) {
    h.states.push_back(random_state(rng, mixtures));
    h.self_loop.push_back(uniform(rng, 0.3, 0.9));
    h.occupancy.push_back(uniform(rng, 1.0, 10.0));
  }
  return h;
}

inline Frame random_frame(std::mt19937_64& rng) {
  Frame f;
  for (double& x : f) x = uniform(rng, 0.0, 1.0);
  return f;
}

inline GestureSequence random_sequence(std::mt19937_64& rng, std::size_t frames) {
  GestureSequence s;
  for (std::size_t t = 0; t < frames; ++t) s.frames.push_back(random_frame(rng));
  return s;
}

// Every left-to-right path through `n` states over `frames` frames, as the
// per-frame state index. Used only for small sizes.
inline void enumerate_paths(std::size_t n, std::size_t frames,
                            const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> path(frames);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t t, std::size_t state) {
    path[t] = state;
    if (t + 1 == frames) {
      if (state + 1 == n) visit(path);
      return;
    }
    rec(t + 1, state);
    if (state + 1 < n) rec(t + 1, state + 1);
  };
  if (frames > 0) rec(0, 0);
}

// Log score of one path: emissions plus self-loop/advance terms, optionally
// with the final exit term.
inline double path_score(const std::vector<std::size_t>& path, const std::vector<double>& self_loop,
                         const std::function<double(std::size_t, std::size_t)>& emit, bool with_exit) {
  double s = emit(0, path[0]);
  for (std::size_t t = 1; t < path.size(); ++t) {
    const std::size_t j = path[t - 1];
    s += path[t] == j ? std::log(self_loop[j]) : std::log1p(-self_loop[j]);
    s += emit(t, path[t]);
  }
  if (with_exit) s += std::log1p(-self_loop.back());
  return s;
}

struct PathOracle {
  double best = kNegInf;
  double total = kNegInf;  // log-sum over paths
  std::vector<std::size_t> argmax;
};

inline PathOracle enumerate_chain(const std::vector<double>& self_loop, std::size_t frames,
                                  const std::function<double(std::size_t, std::size_t)>& emit,
                                  bool with_exit = false) {
  PathOracle o;
  enumerate_paths(self_loop.size(), frames, [&](const std::vector<std::size_t>& p) {
    const double s = path_score(p, self_loop, emit, with_exit);
    if (s > o.best) {
      o.best = s;
      o.argmax = p;
    }
    o.total = o.total == kNegInf ? s : std::max(o.total, s) + std::log1p(std::exp(-std::abs(o.total - s)));
  });
  return o;
}

// Best left-to-right path over frames [start, start+len) with a textbook DP.
inline double segment_best(const std::vector<double>& self_loop, std::size_t start, std::size_t len,
                           const std::function<double(std::size_t, std::size_t)>& emit) {
  const std::size_t n = self_loop.size();
  if (len < n) return kNegInf;
  std::vector<double> prev(n, kNegInf), cur(n);
  prev[0] = emit(start, 0);
  for (std::size_t k = 1; k < len; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      double stay = prev[j] == kNegInf ? kNegInf : prev[j] + std::log(self_loop[j]);
      double move = j > 0 && prev[j - 1] != kNegInf ? prev[j - 1] + std::log1p(-self_loop[j - 1]) : kNegInf;
      const double b = std::max(stay, move);
      cur[j] = b == kNegInf ? kNegInf : b + emit(start + k, j);
    }
    std::swap(prev, cur);
  }
  return prev[n - 1];
}

struct BruteDecode {
  double score = kNegInf;
  std::vector<SignId> signs;
};

// Exhaustive search over sign sequences and segmentations of the whole
// utterance, for the same network the decoder builds.
inline BruteDecode brute_force_decode(const GestureSequence& seq, const DecodeNetwork& net) {
  const TiedModelSet& tms = net.signs();
  const std::size_t frames = seq.frames.size();
  const std::size_t vocab = tms.num_signs();
  std::vector<FrameScoreTable> tables;
  for (const auto& f : seq.frames) tables.push_back(frame_score_table(tms.codebook, f));

  std::map<std::tuple<int, int, std::size_t, std::size_t>, double> memo;
  auto sign_segment = [&](SignId w, std::size_t start, std::size_t len) {
    auto key = std::make_tuple(int(w), -1, start, len);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const double v = segment_best(tms.signs[w].self_loop, start, len, [&](std::size_t t, std::size_t j) {
      return tied_state_log_likelihood(tms, tables[t], w, j);
    });
    return memo[key] = v;
  };
  std::map<std::pair<SignId, SignId>, TransitionModel> cds;
  auto cd_model = [&](SignId u, SignId v) -> const TransitionModel& {
    auto it = cds.find({u, v});
    if (it != cds.end()) return it->second;
    const long idx = net.trained_index(u, v);
    return cds[{u, v}] = idx >= 0 ? net.trained_model(std::size_t(idx)) : net.interpolated(u, v);
  };
  auto cd_segment = [&](SignId u, SignId v, std::size_t start, std::size_t len) {
    auto key = std::make_tuple(int(u), int(v), start, len);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const TransitionModel& m = cd_model(u, v);
    double s = segment_best(m.self_loop, start, len, [&](std::size_t t, std::size_t j) {
      return state_log_likelihood(m.states[j], seq.frames[t]);
    });
    if (s != kNegInf) s += std::log1p(-m.self_loop.back());
    return memo[key] = s;
  };

  BruteDecode best;
  std::vector<SignId> words;
  const bool cd = net.uses_transition_models();

  // Admissible bound on what frames [t, T) can still add: the best emission of
  // any state at each frame, plus one non-negative arc weight per frame.
  // Transition and exit log-probabilities never exceed zero. Cutting branches
  // that cannot beat the incumbent keeps the search exhaustive in effect.
  double best_arc = 0.0;
  for (SignId u = 0; u < vocab; ++u)
    for (SignId v = 0; v < vocab; ++v) best_arc = std::max(best_arc, net.arc_weight(u, v));
  std::vector<double> remaining(frames + 1, 0.0);
  for (std::size_t t = frames; t-- > 0;) {
    double top = kNegInf;
    for (SignId w = 0; w < vocab; ++w)
      for (std::size_t j = 0; j < tms.num_states(w); ++j)
        top = std::max(top, tied_state_log_likelihood(tms, tables[t], w, j));
    if (cd)
      for (SignId u = 0; u < vocab; ++u)
        for (SignId v = 0; v < vocab; ++v)
          for (const auto& st : cd_model(u, v).states) top = std::max(top, state_log_likelihood(st, seq.frames[t]));
    remaining[t] = remaining[t + 1] + top + best_arc;
  }
  auto hopeless = [&](std::size_t start, double acc) { return acc + remaining[start] <= best.score; };

  // Extends a hypothesis whose last sign `w` starts at frame `start`.
  std::function<void(std::size_t, double)> place_sign = [&](std::size_t start, double acc) {
    if (hopeless(start, acc)) return;
    const SignId w = words.back();
    const std::size_t n = tms.num_states(w);
    for (std::size_t len = n; start + len <= frames; ++len) {
      const double seg = sign_segment(w, start, len);
      if (seg == kNegInf) continue;
      const double here = acc + seg;
      const std::size_t end = start + len;
      if (end == frames) {
        if (here > best.score) {
          best.score = here;
          best.signs = words;
        }
        continue;
      }
      if (!net.options().loop_back) continue;
      const double exit = here + tms.signs[w].log_exit();
      for (SignId v = 0; v < vocab; ++v) {
        const double arc = exit + net.arc_weight(w, v);
        words.push_back(v);
        if (!cd) {
          place_sign(end, arc);
        } else {
          const std::size_t min_cd = cd_model(w, v).num_states();
          for (std::size_t cl = min_cd; end + cl < frames; ++cl) {
            const double c = cd_segment(w, v, end, cl);
            if (c != kNegInf) place_sign(end + cl, arc + c);
          }
        }
        words.pop_back();
      }
    }
  };
  for (SignId w = 0; w < vocab; ++w) {
    words = {w};
    place_sign(0, net.start_weight(w));
  }
  return best;
}

// Exhaustive edit alignment: returns the lexicographically smallest
// (total, substitutions, insertions) over every alignment, with deletions.
template <class T>
ErrorCounts exhaustive_alignment(const std::vector<T>& ref, const std::vector<T>& hyp) {
  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;  // total, S, I, D
  Key best{std::numeric_limits<std::size_t>::max(), 0, 0, 0};
  std::function<void(std::size_t, std::size_t, std::size_t, std::size_t, std::size_t)> rec =
      [&](std::size_t r, std::size_t h, std::size_t d, std::size_t i, std::size_t s) {
        if (r == ref.size() && h == hyp.size()) {
          best = std::min(best, Key{d + i + s, s, i, d});
          return;
        }
        if (r < ref.size() && h < hyp.size()) rec(r + 1, h + 1, d, i, s + (ref[r] == hyp[h] ? 0 : 1));
        if (r < ref.size()) rec(r + 1, h, d + 1, i, s);
        if (h < hyp.size()) rec(r, h + 1, d, i + 1, s);
      };
  rec(0, 0, 0, 0, 0);
  return {std::get<3>(best), std::get<2>(best), std::get<1>(best), ref.size()};
}

inline TiedModelSet lossless_tie(const std::vector<SignHMM>& signs) {
  return cluster_stream_states(signs, max_pattern_counts(signs));
}

struct DecodeInstance {
  std::vector<SignHMM> signs;
  TiedModelSet tms;
  BigramLM lm;
  TransitionSet trained;
  NetworkOptions opt;
  GestureSequence seq;
};

inline BigramLM random_bigram(std::mt19937_64& rng, const std::vector<std::string>& vocab) {
  const std::size_t v = vocab.size();
  std::vector<double> start(v), probs(v * v);
  auto fill_row = [&](double* row) {
    double total = 0.0;
    for (std::size_t i = 0; i < v; ++i) total += row[i] = uniform(rng, 0.05, 1.0);
    for (std::size_t i = 0; i < v; ++i) row[i] /= total;
  };
  fill_row(start.data());
  for (std::size_t u = 0; u < v; ++u) fill_row(probs.data() + u * v);
  return BigramLM(vocab, start, probs);
}

// A small random decoding problem: up to three signs, a random bigram, random
// scales and transition mode, and a partially filled trained transition set.
inline DecodeInstance random_instance(std::mt19937_64& rng) {
  DecodeInstance in;
  const std::size_t v = pick(rng, 1, 3);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < v; ++i) {
    in.signs.push_back(random_sign(rng, pick(rng, 1, 3), "W" + std::to_string(i)));
    names.push_back(in.signs.back().name);
  }
  in.tms = lossless_tie(in.signs);
  in.lm = random_bigram(rng, names);
  in.opt.lm_scale = uniform(rng, 0.5, 3.0);
  in.opt.insertion_penalty = uniform(rng, -3.0, 1.0);
  in.opt.transitions = TransitionMode(pick(rng, 0, 2));
  in.trained.num_states = pick(rng, 0, 1) ? 3 : 1;
  for (SignId a = 0; a < v; ++a)
    for (SignId b = 0; b < v; ++b) {
      if (pick(rng, 0, 2) == 0) continue;  // leave some pairs to interpolation
      TransitionModel m = interpolate_transition(in.signs[a], in.signs[b], a, b);
      m.states[0] = random_state(rng);
      m.self_loop[0] = uniform(rng, 0.2, 0.9);
      if (in.trained.num_states == 3) m = replicate_states(m, 3);
      in.trained.pair_model[{a, b}] = std::uint32_t(in.trained.models.size());
      in.trained.models.push_back(std::move(m));
    }
  if (in.trained.models.empty() && in.opt.transitions == TransitionMode::kTrained)
    in.opt.transitions = TransitionMode::kInterpolated;
  std::size_t min_frames = 3;
  for (const auto& s : in.signs) min_frames = std::min(min_frames, s.num_states());
  in.seq = random_sequence(rng, pick(rng, min_frames, 20));
  return in;
}

}  // namespace testing_support
