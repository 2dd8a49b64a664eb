#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"

using namespace signrec;
using namespace testing_support;

TEST(Decoder, MatchesBruteForceWithUnboundedBeams) {
  std::mt19937_64 rng(1);
  for (int c = 0; c < 60; ++c) {
    const DecodeInstance in = random_instance(rng);
    const DecodeNetwork net(in.tms, in.lm, in.opt, &in.trained);
    const auto brute = brute_force_decode(in.seq, net);
    const auto got = decode(in.seq, net, BeamConfig{});
    EXPECT_NEAR(got.score, brute.score, 1e-8) << "case " << c;
    EXPECT_EQ(got.signs, brute.signs) << "case " << c;
  }
}

TEST(Decoder, SegmentsCoverTheUtteranceInOrder) {
  std::mt19937_64 rng(2);
  for (int c = 0; c < 40; ++c) {
    DecodeInstance in = random_instance(rng);
    const DecodeNetwork net(in.tms, in.lm, in.opt, &in.trained);
    const auto r = decode(in.seq, net, BeamConfig{});
    ASSERT_EQ(r.segments.size(), r.signs.size());
    EXPECT_EQ(r.segments.front().first_frame, 0u);
    EXPECT_EQ(r.segments.back().last_frame, in.seq.frames.size() - 1);
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
      const auto& s = r.segments[i];
      EXPECT_GE(s.last_frame + 1 - s.first_frame, in.tms.num_states(s.sign));
      if (i == 0) continue;
      const std::size_t gap = s.first_frame - r.segments[i - 1].last_frame - 1;
      if (in.opt.transitions == TransitionMode::kDirect)
        EXPECT_EQ(gap, 0u);
      else
        EXPECT_GE(gap, 1u);
    }
  }
}

TEST(Decoder, SingleSignNetworkEqualsBestIsolatedMatch) {
  std::mt19937_64 rng(3);
  for (int c = 0; c < 30; ++c) {
    DecodeInstance in = random_instance(rng);
    in.opt.loop_back = false;
    in.seq = random_sequence(rng, pick(rng, 3, 15));
    const DecodeNetwork net(in.tms, in.lm, in.opt, &in.trained);
    double best = kNegInf;
    for (SignId w = 0; w < in.signs.size(); ++w)
      best = std::max(best, net.start_weight(w) + viterbi_score(in.signs[w], in.seq).log_prob);
    const auto r = decode(in.seq, net, BeamConfig{});
    EXPECT_EQ(r.signs.size(), 1u);
    EXPECT_NEAR(r.score, best, 1e-8);
  }
}

TEST(Decoder, RecognizesCleanSentences) {
  SynthConfig cfg;
  cfg.vocab_size = 8;
  cfg.separation = 4.0;
  cfg.seed = 4;
  const auto vocab = make_vocab(cfg);
  const auto tms = lossless_tie(vocab.signs);
  std::mt19937_64 rng(5);
  const DecodeNetwork net(tms, vocab.lm);
  BeamConfig beams;
  beams.state_beam = kDefaultStateBeam;
  beams.sign_beam = kDefaultSignBeam;
  beams.unit_threshold = kDefaultUnitThreshold;
  for (int c = 0; c < 10; ++c) {
    const auto s = sample_sentence(vocab, vocab.lm, true, 2, 6, rng);
    EXPECT_EQ(decode(s.sequence, net, beams).signs, s.signs);
  }
}

TEST(Decoder, NarrowBeamsPruneButStayFeasible) {
  std::mt19937_64 rng(6);
  DecodeInstance in = random_instance(rng);
  in.seq = random_sequence(rng, 20);
  const DecodeNetwork net(in.tms, in.lm, in.opt, &in.trained);
  BeamConfig tight;
  tight.state_beam = 0.0;
  tight.sign_beam = 0.0;
  const auto wide = decode(in.seq, net, BeamConfig{});
  const auto narrow = decode(in.seq, net, tight);
  EXPECT_LE(narrow.score, wide.score + 1e-9);
  EXPECT_LE(narrow.stats.tokens, wide.stats.tokens);
}

TEST(Decoder, FastMatchGatesLowScoringUnits) {
  SynthConfig cfg;
  cfg.vocab_size = 10;
  cfg.seed = 7;
  const auto vocab = make_vocab(cfg);
  const auto tms = lossless_tie(vocab.signs);
  std::mt19937_64 rng(8);
  const auto s = sample_sentence(vocab, vocab.lm, false, 3, 3, rng);
  NetworkOptions opt;
  opt.transitions = TransitionMode::kDirect;
  const DecodeNetwork net(tms, vocab.lm, opt);
  BeamConfig gated;
  gated.unit_threshold = 0.0;
  const auto r = decode(s.sequence, net, gated);
  EXPECT_GT(r.stats.fast_match_gated, 0u);
  EXPECT_EQ(decode(s.sequence, net, BeamConfig{}).stats.fast_match_gated, 0u);
}

TEST(Decoder, ErrorsAreReported) {
  std::mt19937_64 rng(9);
  const std::vector<SignHMM> signs = {random_sign(rng, 3, "A")};
  const auto tms = lossless_tie(signs);
  const auto lm = BigramLM::uniform({"A"});
  NetworkOptions opt;
  opt.loop_back = false;
  const DecodeNetwork net(tms, lm, opt);
  EXPECT_THROW(decode(GestureSequence{}, net, BeamConfig{}), DataError);
  EXPECT_THROW(decode(random_sequence(rng, 2), net, BeamConfig{}), SearchFailure);
  BeamConfig bad;
  bad.state_beam = -1;
  EXPECT_THROW(decode(random_sequence(rng, 5), net, bad), InvalidModel);
  opt.transitions = TransitionMode::kTrained;
  EXPECT_THROW(DecodeNetwork(tms, lm, opt), InvalidModel);
  EXPECT_THROW(DecodeNetwork(tms, BigramLM::uniform({"A", "B"})), DimensionMismatch);
}

TEST(UnitScores, StreamMaximaAndThreshold) {
  std::mt19937_64 rng(10);
  std::vector<SignHMM> signs;
  for (int i = 0; i < 5; ++i) signs.push_back(random_sign(rng, 3, "W" + std::to_string(i)));
  const auto tms = lossless_tie(signs);
  const auto table = frame_score_table(tms.codebook, random_frame(rng));
  const auto u = active_unit_scores(table, tms, 5.0);
  for (SignId w = 0; w < 5; ++w) {
    double total = 0.0;
    for (std::size_t s = 0; s < kNumStreams; ++s) {
      double m = kNegInf;
      for (std::size_t j = 0; j < 3; ++j) m = std::max(m, table.scores[s][tms.mapping[w][j][s]]);
      EXPECT_EQ(u.stream[w][s], m);
      total += m;
    }
    EXPECT_NEAR(u.combined[w], total, 1e-12);
    EXPECT_EQ(bool(u.active[w]), total >= u.best - 5.0);
  }
  EXPECT_EQ(u.combined[u.ranked()[0]], u.best);
}

TEST(Lookahead, AveragesAndLooksAhead) {
  const std::vector<double> v = {-1.0, -2.0, -4.0, -6.0, -8.0};
  EXPECT_DOUBLE_EQ(lookahead_score(-10.0, v, 0, 3), 0.5 * (-10.0 - 1.0) + (-2.0 - 4.0 - 6.0) / 3.0);
  EXPECT_DOUBLE_EQ(lookahead_score(-10.0, v, 3, 3), 0.5 * (-10.0 - 6.0) - 8.0);
  EXPECT_DOUBLE_EQ(lookahead_score(-10.0, v, 4, 3), 0.5 * (-10.0 - 8.0));
  EXPECT_DOUBLE_EQ(lookahead_score(-10.0, v, 1, 0), 0.5 * (-10.0 - 2.0));
}

TEST(Bigram, AddOneEstimates) {
  const std::vector<std::vector<SignId>> corpus = {{0, 1, 1}, {1, 0}, {}};
  const auto lm = estimate_bigram(corpus, {"A", "B", "C"});
  EXPECT_DOUBLE_EQ(lm.start_prob(0), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(lm.start_prob(2), 1.0 / 5.0);
  EXPECT_DOUBLE_EQ(lm.prob(0, 1), 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(lm.prob(1, 1), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(lm.prob(1, 0), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(lm.prob(2, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(lm.log_prob(0, 1), std::log(0.5));
  const std::vector<std::vector<SignId>> bad = {{0, 3}};
  EXPECT_THROW(estimate_bigram(bad, {"A", "B", "C"}), DataError);
}

TEST(Bigram, RejectsInvalidTables) {
  EXPECT_THROW(BigramLM({"A"}, {0.5}, {1.0}), InvalidModel);
  EXPECT_THROW(BigramLM({"A", "B"}, {0.5, 0.5}, {1.0, 0.0}), DimensionMismatch);
  EXPECT_THROW(BigramLM({"A", "B"}, {1.5, -0.5}, {0.5, 0.5, 0.5, 0.5}), InvalidModel);
  EXPECT_THROW(BigramLM::uniform({}), InvalidModel);
}

TEST(Network, WeightsCombineScaleAndPenalty) {
  std::mt19937_64 rng(11);
  const std::vector<SignHMM> signs = {random_sign(rng, 3, "A"), random_sign(rng, 3, "B")};
  const auto tms = lossless_tie(signs);
  const BigramLM lm({"A", "B"}, {0.25, 0.75}, {0.1, 0.9, 0.6, 0.4});
  NetworkOptions opt;
  opt.lm_scale = 2.0;
  opt.insertion_penalty = -1.5;
  const DecodeNetwork net(tms, lm, opt);
  EXPECT_DOUBLE_EQ(net.start_weight(1), 2.0 * std::log(0.75) - 1.5);
  EXPECT_DOUBLE_EQ(net.arc_weight(1, 0), 2.0 * std::log(0.6) - 1.5);
  EXPECT_EQ(net.trained_index(0, 1), -1);
  const auto m = net.interpolated(0, 1);
  EXPECT_EQ(m, interpolate_transition(signs[0], signs[1], 0, 1));
}
