#pragma once

// Isolated sign recognition with start-state gating. Signs are grouped by the
// tied pattern of their first state in each stream; the patterns double as the
// codewords of a per-stream start codebook. A few frames at the start of the
// gesture activate codewords by posterior probability, and only signs active
// in all six streams receive a full Viterbi match.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "signrec/density.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/tying.hpp"

namespace signrec {

struct StartStreamCodes {
  std::vector<std::uint32_t> codewords;      // VQ_k: sorted pattern indices
  std::vector<std::vector<SignId>> subsets;  // SubSet(k, i), parallel to codewords

  bool operator==(const StartStreamCodes&) const = default;
};

struct StartCodebook {
  std::array<StartStreamCodes, kNumStreams> streams;
  std::size_t vocabulary_size = 0;

  bool operator==(const StartCodebook&) const = default;
};

struct GateConfig {
  double threshold = 1e-3;      // posterior threshold tau in [0, 1)
  std::size_t start_frames = 3;  // F
};

inline StartCodebook build_subsets(const TiedModelSet& tms) {
  StartCodebook cb;
  cb.vocabulary_size = tms.num_signs();
  for (std::size_t k = 0; k < kNumStreams; ++k) {
    std::map<std::uint32_t, std::vector<SignId>> groups;
    for (SignId w = 0; w < tms.num_signs(); ++w) groups[tms.mapping[w].at(0)[k]].push_back(w);
    for (auto& [code, signs] : groups) {
      cb.streams[k].codewords.push_back(code);
      cb.streams[k].subsets.push_back(std::move(signs));
    }
  }
  return cb;
}

struct CodewordPosteriors {
  std::vector<double> log_posterior;  // parallel to the stream's codewords
  bool underflow = false;

  std::vector<double> posterior() const {
    std::vector<double> p(log_posterior.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_posterior[i]);
    return p;
  }
};

namespace detail {

inline CodewordPosteriors normalize_log_scores(std::vector<double> ll) {
  CodewordPosteriors out;
  double best = kLogZero;
  for (double x : ll) best = std::max(best, x);
  if (!(best > kLogDensityFloor)) {
    out.underflow = true;
    out.log_posterior.assign(ll.size(), -std::log(double(ll.size())));
    return out;
  }
  const double z = log_sum_exp(ll);
  for (double& x : ll) x -= z;
  out.log_posterior = std::move(ll);
  return out;
}

}  // namespace detail

// p(i | o_k) = p(o_k | k, i) / sum_j p(o_k | k, j) over the stream's codewords,
// evaluated with a max shift in the log domain.
inline CodewordPosteriors codeword_posteriors(std::span<const double> o_k, std::size_t k,
                                              const StartCodebook& cb, const TiedCodebook& codebook) {
  const auto& codes = cb.streams.at(k).codewords;
  std::vector<double> ll(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) ll[i] = codebook.patterns[k][codes[i]].log_likelihood(o_k);
  return detail::normalize_log_scores(std::move(ll));
}

struct CandidateSet {
  std::vector<SignId> signs;  // sorted
  bool fallback = false;      // empty intersection, whole vocabulary returned
  std::array<std::size_t, kNumStreams> active_per_stream{};
};

// WordCD = intersection over streams of the union of subsets whose codeword
// posterior, averaged in the log domain over the first F frames and
// renormalized, exceeds tau.
inline CandidateSet active_candidates(const GestureSequence& seq, const StartCodebook& cb,
                                      const TiedCodebook& codebook, const GateConfig& cfg,
                                      const StreamLayout& layout = StreamLayout::standard()) {
  if (seq.frames.empty()) throw DataError("cannot gate an empty sequence");
  if (cfg.start_frames == 0) throw InvalidModel("start frame count must be at least 1");
  const std::size_t frames = std::min(cfg.start_frames, seq.frames.size());
  const double log_tau = cfg.threshold > 0.0 ? std::log(cfg.threshold) : kLogZero;
  const std::size_t vocab = cb.vocabulary_size;

  CandidateSet out;
  std::vector<std::uint8_t> alive(vocab, 1);
  for (std::size_t k = 0; k < kNumStreams; ++k) {
    const auto& codes = cb.streams[k];
    std::vector<double> avg(codes.codewords.size(), 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
      const auto post = codeword_posteriors(stream_view(seq.frames[f], k, layout), k, cb, codebook);
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += post.log_posterior[i] / double(frames);
    }
    const auto post = detail::normalize_log_scores(std::move(avg));
    std::vector<std::uint8_t> in_stream(vocab, 0);
    for (std::size_t i = 0; i < codes.codewords.size(); ++i) {
      if (!(post.log_posterior[i] > log_tau)) continue;
      ++out.active_per_stream[k];
      for (SignId w : codes.subsets[i]) in_stream[w] = 1;
    }
    for (std::size_t w = 0; w < vocab; ++w) alive[w] &= in_stream[w];
  }
  for (SignId w = 0; w < vocab; ++w)
    if (alive[w]) out.signs.push_back(w);
  if (out.signs.empty()) {
    out.fallback = true;
    for (SignId w = 0; w < vocab; ++w) out.signs.push_back(w);
  }
  return out;
}

// Per-frame tied state scores for a whole sequence, indexed by StateScorer's
// flat state index.
class SequenceScores {
 public:
  SequenceScores(const TiedModelSet& tms, const StateScorer& scorer, const GestureSequence& seq,
                 const StreamLayout& layout = StreamLayout::standard())
      : scorer_(&scorer), frames_(seq.frames.size()) {
    FrameScoreTable table;
    std::vector<double> row;
    data_.reserve(frames_ * scorer.num_states());
    for (const Frame& f : seq.frames) {
      fill_frame_score_table(tms.codebook, f, table, layout);
      density_evaluations_ += table.density_evaluations;
      scorer.score(table, row);
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t frames() const { return frames_; }
  double operator()(std::size_t t, SignId sign, std::size_t state) const {
    return data_[t * scorer_->num_states() + scorer_->flat_index(sign, state)];
  }
  std::size_t density_evaluations() const { return density_evaluations_; }

 private:
  const StateScorer* scorer_;
  std::size_t frames_;
  std::vector<double> data_;
  std::size_t density_evaluations_ = 0;
};

inline Alignment tied_viterbi_score(const TiedModelSet& tms, const SequenceScores& scores, SignId sign) {
  return viterbi_chain(tms.signs.at(sign).self_loop, scores.frames(),
                       [&](std::size_t t, std::size_t j) { return scores(t, sign, j); });
}

struct ScoredSign {
  SignId sign;
  double score;
};

struct IsolatedResult {
  std::vector<ScoredSign> ranked;
  CandidateSet candidates;
  std::size_t viterbi_evaluations = 0;
  std::string diagnostic;
};

// Detailed match over the gated candidates, best first; ties go to the lower
// sign id. `n_best` == 0 keeps every scored candidate.
inline IsolatedResult recognize_isolated(const GestureSequence& seq, const TiedModelSet& tms,
                                         const StateScorer& scorer, const StartCodebook& cb,
                                         const GateConfig& cfg, std::size_t n_best = 1,
                                         const StreamLayout& layout = StreamLayout::standard()) {
  IsolatedResult out;
  out.candidates = active_candidates(seq, cb, tms.codebook, cfg, layout);
  const SequenceScores scores(tms, scorer, seq, layout);
  for (SignId w : out.candidates.signs) {
    if (seq.frames.size() < tms.num_states(w)) continue;
    ++out.viterbi_evaluations;
    const Alignment a = tied_viterbi_score(tms, scores, w);
    if (a.log_prob != kLogZero) out.ranked.push_back({w, a.log_prob});
  }
  if (out.ranked.empty()) {
    out.diagnostic = "sequence of " + std::to_string(seq.frames.size()) +
                     " frames is infeasible for every candidate sign";
    return out;
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const ScoredSign& a, const ScoredSign& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sign < b.sign;
  });
  if (n_best > 0 && out.ranked.size() > n_best) out.ranked.resize(n_best);
  return out;
}

}  // namespace signrec
