#pragma once

// Synthetic sign vocabularies and gesture data drawn from known HMMs.
//
// Each stream owns a pool of prototype means; every sign state picks one
// prototype per stream and perturbs it slightly. Prototype offsets from the
// centre of the unit box scale with `separation` (in units of the frame noise
// standard deviation), so larger values give more distinguishable signs.
// Offsets in low-dimensional streams are stretched by sqrt(widest / dim) so that
// every stream has the same expected distance between prototypes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "signrec/decoder.hpp"
#include "signrec/density.hpp"
#include "signrec/epenthesis.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"

namespace signrec {

struct SynthConfig {
  std::size_t vocab_size = 20;
  std::size_t states_per_sign = 3;
  std::size_t mixtures = 1;
  double separation = 3.0;
  double noise_std = 0.05;
  // Prototype means per stream; 0 gives every state its own mean.
  std::size_t patterns_per_stream = 0;
  double pattern_jitter = 0.1;  // in noise standard deviations
  // Number of shared start postures. Each sign's first state takes one
  // posture (the same index in every stream); 0 disables.
  std::size_t start_postures = 0;
  double start_separation = 0.0;  // 0: same as `separation`
  double self_loop = 0.8;
  double epenthesis_self_loop = 0.6;
  // Likely successors per sign in the generated bigram; 0 gives a uniform model.
  std::size_t successors_per_sign = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 1) throw InvalidModel("synthetic vocabulary needs at least one sign");
    if (!(separation > 0.0) || start_separation < 0.0) throw InvalidModel("separation must be positive");
    if (!(noise_std > 0.0)) throw InvalidModel("noise standard deviation must be positive");
    if (states_per_sign < 1 || mixtures < 1) throw InvalidModel("states and mixtures must be positive");
    if (!(self_loop > 0.0 && self_loop < 1.0) || !(epenthesis_self_loop > 0.0 && epenthesis_self_loop < 1.0))
      throw InvalidModel("self-loop probabilities must lie in (0, 1)");
  }
};

struct SynthVocab {
  std::vector<SignHMM> signs;
  BigramLM lm;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& s : signs) out.push_back(s.name);
    return out;
  }
};

inline std::string synth_sign_name(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "S" + digits;
}

inline SynthVocab make_vocab(const SynthConfig& cfg, const StreamLayout& layout = StreamLayout::standard()) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = cfg.noise_std;
  auto place = [&](double centre_offset) { return std::clamp(0.5 + centre_offset, 0.05, 0.95); };
  std::array<double, kNumStreams> spread{};
  std::size_t widest = 0;
  for (std::size_t s = 0; s < kNumStreams; ++s) widest = std::max(widest, layout.dim(s));
  for (std::size_t s = 0; s < kNumStreams; ++s)
    spread[s] = cfg.separation * sd * std::sqrt(double(widest) / double(layout.dim(s)));

  std::array<std::vector<std::vector<double>>, kNumStreams> pools;
  for (std::size_t s = 0; s < kNumStreams; ++s)
    for (std::size_t p = 0; p < cfg.patterns_per_stream; ++p) {
      std::vector<double> m(layout.dim(s));
      for (double& x : m) x = place(spread[s] * offset(rng));
      pools[s].push_back(std::move(m));
    }
  // Start postures: greedy max-min selection from random candidates.
  std::array<std::vector<std::vector<double>>, kNumStreams> start_pools;
  const double start_scale = cfg.start_separation > 0.0 ? cfg.start_separation / cfg.separation : 1.0;
  for (std::size_t s = 0; s < kNumStreams && cfg.start_postures > 0; ++s) {
    std::vector<std::vector<double>> cand(16 * cfg.start_postures, std::vector<double>(layout.dim(s)));
    for (auto& c : cand)
      for (double& x : c) x = place(start_scale * spread[s] * offset(rng));
    std::vector<double> nearest(cand.size(), std::numeric_limits<double>::infinity());
    std::size_t pick = 0;
    for (std::size_t p = 0; p < cfg.start_postures; ++p) {
      start_pools[s].push_back(cand[pick]);
      std::size_t far = 0;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < cand[i].size(); ++d) d2 += (cand[i][d] - cand[pick][d]) * (cand[i][d] - cand[pick][d]);
        nearest[i] = std::min(nearest[i], d2);
        if (nearest[i] > nearest[far]) far = i;
      }
      pick = far;
    }
  }

  SynthVocab out;
  for (std::size_t w = 0; w < cfg.vocab_size; ++w) {
    SignHMM hmm;
    hmm.name = synth_sign_name(w);
    const std::size_t posture =
        cfg.start_postures > 0 ? std::uniform_int_distribution<std::size_t>(0, cfg.start_postures - 1)(rng) : 0;
    for (std::size_t j = 0; j < cfg.states_per_sign; ++j) {
      StateModel state;
      for (std::size_t s = 0; s < kNumStreams; ++s) {
        const std::size_t dim = layout.dim(s);
        std::vector<double> centre(dim);
        if (j == 0 && cfg.start_postures > 0) {
          centre = start_pools[s][posture];
        } else if (!pools[s].empty()) {
          const auto& proto = pools[s][std::uniform_int_distribution<std::size_t>(0, pools[s].size() - 1)(rng)];
          for (std::size_t d = 0; d < dim; ++d) centre[d] = std::clamp(proto[d] + cfg.pattern_jitter * sd * gauss(rng), 0.05, 0.95);
        } else {
          for (double& x : centre) x = place(spread[s] * offset(rng));
        }
        std::vector<double> means, vars;
        for (std::size_t m = 0; m < cfg.mixtures; ++m)
          for (std::size_t d = 0; d < dim; ++d) {
            const double shift = cfg.mixtures > 1 ? sd * gauss(rng) : 0.0;
            means.push_back(std::clamp(centre[d] + shift, 0.0, 1.0));
            vars.push_back(sd * sd);
          }
        state.streams[s] = StreamDensity(dim, std::vector<double>(cfg.mixtures, 1.0 / double(cfg.mixtures)),
                                         std::move(means), std::move(vars));
      }
      hmm.states.push_back(std::move(state));
      hmm.self_loop.push_back(cfg.self_loop);
      hmm.occupancy.push_back(1.0);
    }
    out.signs.push_back(std::move(hmm));
  }

  const std::size_t v = cfg.vocab_size;
  std::vector<std::string> names = out.names();
  if (cfg.successors_per_sign == 0 || cfg.successors_per_sign >= v) {
    out.lm = BigramLM::uniform(std::move(names));
  } else {
    // 90% of each row goes to a few random successors, the rest is spread.
    std::vector<double> probs(v * v, 0.1 / double(v));
    std::vector<std::size_t> ids(v);
    for (std::size_t u = 0; u < v; ++u) {
      for (std::size_t i = 0; i < v; ++i) ids[i] = i;
      std::shuffle(ids.begin(), ids.end(), rng);
      std::vector<double> w(cfg.successors_per_sign);
      double total = 0.0;
      for (double& x : w) total += x = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (std::size_t k = 0; k < w.size(); ++k) probs[u * v + ids[k]] += 0.9 * w[k] / total;
      double row = 0.0;
      for (std::size_t i = 0; i < v; ++i) row += probs[u * v + i];
      for (std::size_t i = 0; i < v; ++i) probs[u * v + i] /= row;
    }
    out.lm = BigramLM(std::move(names), std::vector<double>(v, 1.0 / double(v)), std::move(probs));
  }
  return out;
}

namespace detail {

inline Frame sample_frame(const StateModel& state, std::mt19937_64& rng, const StreamLayout& layout) {
  Frame f{};
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t s = 0; s < kNumStreams; ++s) {
    const StreamDensity& d = state.streams[s];
    std::size_t m = 0;
    if (d.components() > 1) {
      std::discrete_distribution<std::size_t> pick(d.weights().begin(), d.weights().end());
      m = pick(rng);
    }
    const auto mean = d.mean(m);
    const auto var = d.variance(m);
    for (std::size_t k = 0; k < d.dim(); ++k)
      f[layout.offset(s) + k] = std::clamp(mean[k] + std::sqrt(var[k]) * gauss(rng), 0.0, 1.0);
  }
  return f;
}

// Left-to-right walk with geometric dwell; each state emits at least one frame.
inline void sample_chain(const std::vector<StateModel>& states, const std::vector<double>& self_loop,
                         std::mt19937_64& rng, std::vector<Frame>& out, const StreamLayout& layout) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t j = 0; j < states.size(); ++j) {
    do {
      out.push_back(sample_frame(states[j], rng, layout));
    } while (coin(rng) < self_loop[j]);
  }
}

}  // namespace detail

inline GestureSequence sample_sign(const SignHMM& hmm, std::mt19937_64& rng,
                                   const StreamLayout& layout = StreamLayout::standard()) {
  GestureSequence seq;
  detail::sample_chain(hmm.states, hmm.self_loop, rng, seq.frames, layout);
  seq.label = {hmm.name};
  return seq;
}

struct SentenceSample {
  GestureSequence sequence;
  std::vector<SignId> signs;
  std::vector<Segment> segments;  // frames of each sign, epenthesis excluded
};

// Sign sequence drawn from the bigram; with `epenthesis` on, frames sampled
// from the interpolated transition model are placed between adjacent signs.
inline SentenceSample sample_sentence(const SynthVocab& vocab, const BigramLM& lm, bool epenthesis,
                                      std::size_t min_length, std::size_t max_length, std::mt19937_64& rng,
                                      double epenthesis_self_loop = 0.6,
                                      const StreamLayout& layout = StreamLayout::standard()) {
  if (vocab.signs.empty()) throw InvalidModel("cannot sample from an empty vocabulary");
  if (lm.size() != vocab.signs.size()) throw DimensionMismatch("bigram does not match vocabulary");
  if (min_length < 1 || max_length < min_length) throw InvalidModel("invalid sentence length range");
  const std::size_t length = std::uniform_int_distribution<std::size_t>(min_length, max_length)(rng);

  SentenceSample out;
  const auto& start = lm.start_probs();
  out.signs.push_back(SignId(std::discrete_distribution<std::size_t>(start.begin(), start.end())(rng)));
  const std::size_t v = lm.size();
  while (out.signs.size() < length) {
    const auto row = lm.probs().begin() + std::ptrdiff_t(out.signs.back() * v);
    out.signs.push_back(SignId(std::discrete_distribution<std::size_t>(row, row + std::ptrdiff_t(v))(rng)));
  }

  auto& frames = out.sequence.frames;
  for (std::size_t i = 0; i < out.signs.size(); ++i) {
    const SignHMM& hmm = vocab.signs[out.signs[i]];
    if (i > 0 && epenthesis) {
      TransitionModel cd = interpolate_transition(vocab.signs[out.signs[i - 1]], hmm, out.signs[i - 1], out.signs[i]);
      std::fill(cd.self_loop.begin(), cd.self_loop.end(), epenthesis_self_loop);
      detail::sample_chain(cd.states, cd.self_loop, rng, frames, layout);
    }
    const std::size_t first = frames.size();
    detail::sample_chain(hmm.states, hmm.self_loop, rng, frames, layout);
    out.segments.push_back({out.signs[i], first, frames.size() - 1});
    out.sequence.label.push_back(hmm.name);
  }
  out.sequence.sentence = true;
  return out;
}

}  // namespace signrec
