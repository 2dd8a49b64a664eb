#pragma once

// Time-synchronous Viterbi beam search over a recursive transition network of
// sign HMM states and movement-epenthesis states. Cross-sign arcs carry the
// bigram score; pruning happens at state level (against the frame best) and at
// sign level (against the best sign exit). A per-frame unit score gates entry
// into signs, and a look-ahead score gates entry into transition models.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "signrec/density.hpp"
#include "signrec/epenthesis.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/tying.hpp"

namespace signrec {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Add-one smoothed sign bigram with a sentence-start context. Probabilities
// are kept so that the model serializes without infinities.
class BigramLM {
 public:
  BigramLM() = default;

  BigramLM(std::vector<std::string> vocab, std::vector<double> start, std::vector<double> probs)
      : vocab_(std::move(vocab)), start_(std::move(start)), probs_(std::move(probs)) {
    const std::size_t v = vocab_.size();
    if (v == 0) throw InvalidModel("bigram vocabulary is empty");
    if (start_.size() != v || probs_.size() != v * v) throw DimensionMismatch("bigram table size mismatch");
    check_row(start_, "<s>");
    for (std::size_t u = 0; u < v; ++u)
      check_row(std::span<const double>(probs_).subspan(u * v, v), vocab_[u]);
    log_start_.resize(v);
    log_probs_.resize(v * v);
    for (std::size_t i = 0; i < v; ++i) log_start_[i] = std::log(start_[i]);
    for (std::size_t i = 0; i < v * v; ++i) log_probs_[i] = std::log(probs_[i]);
  }

  static BigramLM uniform(std::vector<std::string> vocab) {
    const std::size_t v = vocab.size();
    if (v == 0) throw InvalidModel("bigram vocabulary is empty");
    return BigramLM(std::move(vocab), std::vector<double>(v, 1.0 / double(v)),
                    std::vector<double>(v * v, 1.0 / double(v)));
  }

  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  double start_prob(SignId v) const { return start_[v]; }
  double prob(SignId u, SignId v) const { return probs_[std::size_t(u) * size() + v]; }
  double log_start(SignId v) const { return log_start_[v]; }
  double log_prob(SignId u, SignId v) const { return log_probs_[std::size_t(u) * size() + v]; }
  const std::vector<double>& start_probs() const { return start_; }
  const std::vector<double>& probs() const { return probs_; }

  bool operator==(const BigramLM& o) const {
    return vocab_ == o.vocab_ && start_ == o.start_ && probs_ == o.probs_;
  }

 private:
  static void check_row(std::span<const double> row, const std::string& context) {
    double total = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw InvalidModel("negative bigram probability after '" + context + "'");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidModel("bigram row for '" + context + "' does not sum to 1");
  }

  std::vector<std::string> vocab_;
  std::vector<double> start_, probs_;
  std::vector<double> log_start_, log_probs_;
};

// P(v|u) = (c(u,v) + 1) / (c(u,.) + V), P(v|<s>) likewise from sentence starts.
inline BigramLM estimate_bigram(std::span<const std::vector<SignId>> corpus, std::vector<std::string> vocab) {
  const std::size_t v = vocab.size();
  if (v == 0) throw InvalidModel("bigram vocabulary is empty");
  std::vector<double> start_c(v, 0.0), pair_c(v * v, 0.0), row_c(v, 0.0);
  double sentences = 0.0;
  for (const auto& sent : corpus) {
    if (sent.empty()) continue;
    for (SignId w : sent)
      if (w >= v) throw DataError("corpus sign id " + std::to_string(w) + " outside vocabulary");
    start_c[sent.front()] += 1.0;
    sentences += 1.0;
    for (std::size_t i = 0; i + 1 < sent.size(); ++i) {
      pair_c[std::size_t(sent[i]) * v + sent[i + 1]] += 1.0;
      row_c[sent[i]] += 1.0;
    }
  }
  std::vector<double> start(v), probs(v * v);
  for (std::size_t i = 0; i < v; ++i) start[i] = (start_c[i] + 1.0) / (sentences + double(v));
  for (std::size_t u = 0; u < v; ++u)
    for (std::size_t w = 0; w < v; ++w) probs[u * v + w] = (pair_c[u * v + w] + 1.0) / (row_c[u] + double(v));
  return BigramLM(std::move(vocab), std::move(start), std::move(probs));
}

enum class TransitionMode {
  kDirect,        // sign end -> next sign start, no epenthesis model
  kInterpolated,  // every pair uses the interpolated one-state model
  kTrained,       // trained/tied models where available, interpolated otherwise
};

struct NetworkOptions {
  double lm_scale = 1.0;
  double insertion_penalty = 0.0;
  TransitionMode transitions = TransitionMode::kInterpolated;
  // When false the network accepts exactly one sign.
  bool loop_back = true;
};

// Immutable decoding graph; shareable between concurrent decodes.
class DecodeNetwork {
 public:
  DecodeNetwork(const TiedModelSet& signs, const BigramLM& lm, NetworkOptions opt = {},
                const TransitionSet* trained = nullptr)
      : signs_(&signs), lm_(&lm), opt_(opt), trained_(trained), scorer_(signs) {
    signs.validate();
    if (lm.size() != signs.num_signs()) throw DimensionMismatch("bigram vocabulary does not match sign set");
    if (opt.transitions == TransitionMode::kTrained && trained == nullptr)
      throw InvalidModel("trained transition mode needs a transition set");
  }

  const TiedModelSet& signs() const { return *signs_; }
  const BigramLM& lm() const { return *lm_; }
  const NetworkOptions& options() const { return opt_; }
  const StateScorer& scorer() const { return scorer_; }
  std::size_t num_signs() const { return signs_->num_signs(); }

  double start_weight(SignId v) const { return opt_.lm_scale * lm_->log_start(v) + opt_.insertion_penalty; }
  double arc_weight(SignId u, SignId v) const {
    return opt_.lm_scale * lm_->log_prob(u, v) + opt_.insertion_penalty;
  }

  bool uses_transition_models() const { return opt_.transitions != TransitionMode::kDirect; }

  // Trained model index for the pair, or -1 when the pair falls back to interpolation.
  long trained_index(SignId u, SignId v) const {
    if (opt_.transitions != TransitionMode::kTrained) return -1;
    const auto it = trained_->pair_model.find({u, v});
    return it == trained_->pair_model.end() ? -1 : long(it->second);
  }
  const TransitionModel& trained_model(std::size_t index) const { return trained_->models[index]; }

  TransitionModel interpolated(SignId u, SignId v) const {
    const std::size_t last = signs_->num_states(u) - 1;
    return interpolate_states(signs_->state_model(u, last), signs_->signs[u].self_loop[last],
                              signs_->state_model(v, 0), signs_->signs[v].self_loop[0], u, v);
  }

 private:
  const TiedModelSet* signs_;
  const BigramLM* lm_;
  NetworkOptions opt_;
  const TransitionSet* trained_;
  StateScorer scorer_;
};

// Beam widths are log-score offsets below the current best; infinity disables.
struct BeamConfig {
  double state_beam = kInfinity;
  double sign_beam = kInfinity;
  double unit_threshold = kInfinity;
  double lookahead_beam = kInfinity;
  std::size_t lookahead_depth = 3;

  void validate() const {
    if (state_beam < 0 || sign_beam < 0 || unit_threshold < 0 || lookahead_beam < 0)
      throw InvalidModel("beam widths must be non-negative");
  }
};

// Defaults used by the command-line tools.
inline constexpr double kDefaultStateBeam = 300.0;
inline constexpr double kDefaultSignBeam = 150.0;
inline constexpr double kDefaultUnitThreshold = 150.0;

struct UnitScores {
  std::vector<std::array<double, kNumStreams>> stream;  // P_U(t, s)
  std::vector<double> combined;                         // sum over streams
  std::vector<std::uint8_t> active;
  double best = kLogZero;

  std::vector<SignId> ranked() const {
    std::vector<SignId> ids(combined.size());
    for (SignId i = 0; i < ids.size(); ++i) ids[i] = i;
    std::stable_sort(ids.begin(), ids.end(), [&](SignId a, SignId b) { return combined[a] > combined[b]; });
    return ids;
  }
};

// P_U(t, s) = max over the unit's states of the stream-s pattern score; a unit
// is active when its summed score is within `threshold` of the best unit.
inline UnitScores active_unit_scores(const FrameScoreTable& table, const TiedModelSet& tms,
                                     double threshold) {
  UnitScores out;
  const std::size_t v = tms.num_signs();
  out.stream.resize(v);
  out.combined.resize(v);
  out.active.assign(v, 0);
  for (SignId w = 0; w < v; ++w) {
    double total = 0.0;
    for (std::size_t s = 0; s < kNumStreams; ++s) {
      double m = kLogZero;
      for (const auto& row : tms.mapping[w]) m = std::max(m, table.scores[s][row[s]]);
      out.stream[w][s] = m;
      total += m;
    }
    out.combined[w] = total;
    out.best = std::max(out.best, total);
  }
  for (SignId w = 0; w < v; ++w) out.active[w] = out.combined[w] >= out.best - threshold;
  return out;
}

// (log p_u + log p_v) / 2 + mean of v's first-state scores over frames
// t+1 .. t+depth (truncated at the last frame; empty window contributes 0).
// `v_first_scores[t]` is log b_{v,1}(O_t); `u_last_score` is the path score in
// u's last state.
inline double lookahead_score(double u_last_score, std::span<const double> v_first_scores, std::size_t t,
                              std::size_t depth = 3) {
  const std::size_t frames = v_first_scores.size();
  double ahead = 0.0;
  std::size_t n = 0;
  for (std::size_t k = t + 1; k < frames && k <= t + depth; ++k, ++n) ahead += v_first_scores[k];
  if (n > 0) ahead /= double(n);
  return 0.5 * (u_last_score + v_first_scores[t]) + ahead;
}

// Partial path: score, back-pointer to the last completed sign and the frame
// the current unit was entered.
struct Hypothesis {
  double score = kLogZero;
  std::int32_t trace = -1;
  std::int32_t entry = -1;

  bool alive() const { return score != kLogZero; }
};

struct Segment {
  SignId sign;
  std::size_t first_frame;
  std::size_t last_frame;

  bool operator==(const Segment&) const = default;
};

struct DecodeStats {
  std::size_t frames = 0;
  std::size_t tokens = 0;               // live tokens summed over frames
  std::size_t state_pruned = 0;
  std::size_t sign_exits_pruned = 0;
  std::size_t fast_match_gated = 0;
  std::size_t lookahead_gated = 0;
  std::size_t transition_entries = 0;
  std::vector<double> frame_best;
};

struct DecodeResult {
  std::vector<SignId> signs;
  std::vector<Segment> segments;
  double score = kLogZero;
  DecodeStats stats;
};

namespace detail {

struct TraceNode {
  SignId sign;
  std::int32_t first_frame;
  std::int32_t last_frame;
  std::int32_t prev;
};

struct CdTokens {
  const TransitionModel* model = nullptr;
  std::uint64_t emission_key = 0;
  std::vector<Hypothesis> states;
};

inline bool relax(Hypothesis& h, double score, std::int32_t trace, std::int32_t entry) {
  if (score > h.score) {
    h.score = score;
    h.trace = trace;
    h.entry = entry;
    return true;
  }
  return false;
}

}  // namespace detail

// Decodes one utterance. The search state lives in this call; the network is
// only read.
inline DecodeResult decode(const GestureSequence& seq, const DecodeNetwork& net, const BeamConfig& beams,
                           const StreamLayout& layout = StreamLayout::standard()) {
  beams.validate();
  const std::size_t frames = seq.frames.size();
  if (frames == 0) throw DataError("cannot decode an empty sequence");
  const TiedModelSet& tms = net.signs();
  const StateScorer& scorer = net.scorer();
  const std::size_t vocab = tms.num_signs();
  const bool gate_units = std::isfinite(beams.unit_threshold);
  const bool gate_lookahead = std::isfinite(beams.lookahead_beam);

  std::vector<FrameScoreTable> tables(frames);
  for (std::size_t t = 0; t < frames; ++t) fill_frame_score_table(tms.codebook, seq.frames[t], tables[t], layout);
  // first_scores[v * T + t] = log b_{v,1}(O_t), only needed for look-ahead.
  std::vector<double> first_scores;
  if (gate_lookahead) {
    first_scores.resize(vocab * frames);
    for (SignId v = 0; v < vocab; ++v)
      for (std::size_t t = 0; t < frames; ++t) first_scores[v * frames + t] = tied_state_log_likelihood(tms, tables[t], v, 0);
  }

  std::vector<double> log_self(scorer.num_states()), log_adv(scorer.num_states());
  std::vector<std::size_t> last_state(vocab);
  for (SignId w = 0; w < vocab; ++w) {
    const auto& sk = tms.signs[w];
    for (std::size_t j = 0; j < sk.num_states(); ++j) {
      log_self[scorer.flat_index(w, j)] = sk.log_self(j);
      log_adv[scorer.flat_index(w, j)] = sk.log_advance(j);
    }
    last_state[w] = scorer.flat_index(w, sk.num_states() - 1);
  }

  // Interpolated models built on demand for this utterance.
  std::unordered_map<std::uint64_t, std::unique_ptr<TransitionModel>> interpolated;
  auto cd_model = [&](SignId u, SignId v, std::uint64_t& key) -> const TransitionModel* {
    const long idx = net.trained_index(u, v);
    if (idx >= 0) {
      key = std::uint64_t(idx);
      return &net.trained_model(std::size_t(idx));
    }
    key = (std::uint64_t(1) << 62) | (std::uint64_t(u) * vocab + v);
    auto& slot = interpolated[key];
    if (!slot) slot = std::make_unique<TransitionModel>(net.interpolated(u, v));
    return slot.get();
  };

  DecodeResult result;
  DecodeStats& stats = result.stats;
  stats.frames = frames;
  std::vector<detail::TraceNode> trace;
  std::vector<Hypothesis> cur(scorer.num_states()), next(scorer.num_states());
  std::map<std::uint64_t, detail::CdTokens> cur_cd, next_cd;
  std::vector<double> state_scores;
  std::unordered_map<std::uint64_t, std::vector<double>> cd_emissions;
  std::vector<std::uint8_t> active(vocab, 1);

  struct CdEntry {
    SignId u, v;
    double score;
    double lookahead;
    std::int32_t node;
  };
  std::vector<CdEntry> cd_entries;

  for (std::size_t t = 0; t < frames; ++t) {
    const auto tt = std::int32_t(t);
    scorer.score(tables[t], state_scores);
    if (gate_units) {
      const UnitScores units = active_unit_scores(tables[t], tms, beams.unit_threshold);
      active = units.active;
    }
    std::fill(next.begin(), next.end(), Hypothesis{});
    next_cd.clear();
    auto enter_sign = [&](SignId v, double score, std::int32_t node) {
      if (!active[v]) {
        ++stats.fast_match_gated;
        return;
      }
      detail::relax(next[scorer.offset(v)], score, node, tt);
    };

    if (t == 0) {
      for (SignId v = 0; v < vocab; ++v) enter_sign(v, net.start_weight(v), -1);
    } else {
      // Within-sign arcs.
      for (SignId w = 0; w < vocab; ++w) {
        const std::size_t off = scorer.offset(w);
        const std::size_t n = tms.num_states(w);
        for (std::size_t j = 0; j < n; ++j) {
          const Hypothesis& h = cur[off + j];
          if (!h.alive()) continue;
          detail::relax(next[off + j], h.score + log_self[off + j], h.trace, h.entry);
          if (j + 1 < n) detail::relax(next[off + j + 1], h.score + log_adv[off + j], h.trace, h.entry);
        }
      }
      // Transition-model arcs, including exits into the following sign.
      for (const auto& [key, cd] : cur_cd) {
        const TransitionModel& m = *cd.model;
        const auto v = SignId(key % vocab);
        detail::CdTokens* dst = nullptr;
        for (std::size_t j = 0; j < cd.states.size(); ++j) {
          const Hypothesis& h = cd.states[j];
          if (!h.alive()) continue;
          if (!dst) {
            dst = &next_cd[key];
            if (!dst->model) {
              dst->model = cd.model;
              dst->emission_key = cd.emission_key;
              dst->states.assign(m.num_states(), Hypothesis{});
            }
          }
          detail::relax(dst->states[j], h.score + m.log_self(j), h.trace, h.entry);
          if (j + 1 < m.num_states())
            detail::relax(dst->states[j + 1], h.score + m.log_advance(j), h.trace, h.entry);
          else
            enter_sign(v, h.score + m.log_exit(), h.trace);
        }
      }
      // Sign exits from the previous frame, pruned against the best exit.
      double best_exit = kLogZero;
      for (SignId w = 0; w < vocab; ++w) {
        const Hypothesis& h = cur[last_state[w]];
        if (h.alive()) best_exit = std::max(best_exit, h.score + tms.signs[w].log_exit());
      }
      cd_entries.clear();
      if (net.options().loop_back && best_exit != kLogZero) {
        for (SignId u = 0; u < vocab; ++u) {
          const Hypothesis& h = cur[last_state[u]];
          if (!h.alive()) continue;
          const double exit = h.score + tms.signs[u].log_exit();
          if (exit == kLogZero) continue;
          if (exit < best_exit - beams.sign_beam) {
            ++stats.sign_exits_pruned;
            continue;
          }
          const auto node = std::int32_t(trace.size());
          trace.push_back({u, h.entry, tt - 1, h.trace});
          for (SignId v = 0; v < vocab; ++v) {
            const double arc = net.arc_weight(u, v);
            if (arc == kLogZero) continue;
            if (!net.uses_transition_models()) {
              enter_sign(v, exit + arc, node);
              continue;
            }
            const double la = gate_lookahead
                                  ? lookahead_score(h.score, std::span<const double>(first_scores).subspan(v * frames, frames), t,
                                                    beams.lookahead_depth)
                                  : 0.0;
            // Entry into CD(v|u) has probability 1.
            cd_entries.push_back({u, v, exit + arc, la, node});
          }
        }
      }
      double best_la = kLogZero;
      for (const auto& e : cd_entries) best_la = std::max(best_la, e.lookahead);
      for (const auto& e : cd_entries) {
        if (gate_lookahead && e.lookahead < best_la - beams.lookahead_beam) {
          ++stats.lookahead_gated;
          continue;
        }
        const std::uint64_t key = std::uint64_t(e.u) * vocab + e.v;
        auto& dst = next_cd[key];
        if (!dst.model) {
          dst.model = cd_model(e.u, e.v, dst.emission_key);
          dst.states.assign(dst.model->num_states(), Hypothesis{});
        }
        ++stats.transition_entries;
        detail::relax(dst.states[0], e.score, e.node, tt);
      }
    }

    // Emissions and frame best.
    double best = kLogZero;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (!next[i].alive()) continue;
      next[i].score += state_scores[i];
      best = std::max(best, next[i].score);
    }
    cd_emissions.clear();
    for (auto& [key, cd] : next_cd) {
      auto& em = cd_emissions[cd.emission_key];
      if (em.empty()) {
        em.resize(cd.model->num_states());
        for (std::size_t j = 0; j < em.size(); ++j) em[j] = state_log_likelihood(cd.model->states[j], seq.frames[t], layout);
      }
      for (std::size_t j = 0; j < cd.states.size(); ++j) {
        if (!cd.states[j].alive()) continue;
        cd.states[j].score += em[j];
        best = std::max(best, cd.states[j].score);
      }
    }
    if (best == kLogZero)
      throw SearchFailure("all hypotheses pruned at frame " + std::to_string(t) + "; try wider beams");

    // State-level beam.
    const double floor = best - beams.state_beam;
    std::size_t live = 0;
    for (auto& h : next) {
      if (!h.alive()) continue;
      if (h.score < floor) {
        h = Hypothesis{};
        ++stats.state_pruned;
      } else {
        ++live;
      }
    }
    for (auto it = next_cd.begin(); it != next_cd.end();) {
      bool any = false;
      for (auto& h : it->second.states) {
        if (!h.alive()) continue;
        if (h.score < floor) {
          h = Hypothesis{};
          ++stats.state_pruned;
        } else {
          any = true;
          ++live;
        }
      }
      it = any ? std::next(it) : next_cd.erase(it);
    }
    stats.tokens += live;
    stats.frame_best.push_back(best);
    std::swap(cur, next);
    std::swap(cur_cd, next_cd);
  }

  SignId best_sign = 0;
  double best_final = kLogZero;
  for (SignId w = 0; w < vocab; ++w) {
    const Hypothesis& h = cur[last_state[w]];
    if (h.score > best_final) {
      best_final = h.score;
      best_sign = w;
    }
  }
  if (best_final == kLogZero)
    throw SearchFailure("no hypothesis ends in a final sign state; try wider beams");

  const Hypothesis& fin = cur[last_state[best_sign]];
  result.score = best_final;
  result.segments.push_back({best_sign, std::size_t(fin.entry), frames - 1});
  for (std::int32_t n = fin.trace; n >= 0; n = trace[n].prev)
    result.segments.push_back({trace[n].sign, std::size_t(trace[n].first_frame), std::size_t(trace[n].last_frame)});
  std::reverse(result.segments.begin(), result.segments.end());
  for (const auto& s : result.segments) result.signs.push_back(s.sign);
  return result;
}

}  // namespace signrec
