#pragma once

// Command-line front end. Kept in a header so tests can drive commands
// in-process through run_cli().

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "signrec/signrec.hpp"

namespace signrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRecognition = 1;
inline constexpr int kExitUsage = 2;

// Pattern-count flag order: left/right position, orientation, shape.
inline constexpr std::array<std::size_t, kNumStreams> kPatternFlagStream = {3, 5, 1, 2, 4, 0};

inline PatternCounts parse_pattern_counts(const std::string& text, const std::vector<SignHMM>& signs) {
  if (text == "max") return max_pattern_counts(signs);
  std::vector<std::size_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      values.push_back(std::size_t(v));
    } catch (const std::exception&) {
      throw DataError("invalid pattern count '" + item + "'");
    }
  }
  if (values.size() == 1) values.assign(kNumStreams, values.front());
  if (values.size() != kNumStreams) throw DataError("--patterns needs one value or six (Lp,Lo,Ls,Rp,Ro,Rs)");
  PatternCounts counts{};
  for (std::size_t i = 0; i < kNumStreams; ++i) counts[kPatternFlagStream[i]] = values[i];
  return counts;
}

struct Context {
  Context(std::ostream& o, std::ostream& e) : out(o), err(e) {}

  std::ostream& out;
  std::ostream& err;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string model;
  std::string output;
  std::string invocation;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << text;
}

inline std::vector<GestureSequence> normalized(const std::vector<GestureSequence>& data, const ModelBundle& b) {
  std::vector<GestureSequence> out;
  out.reserve(data.size());
  for (const auto& seq : data) out.push_back(normalize_sequence(seq, b.normalization));
  return out;
}

inline void record_stage(ModelBundle& b, const Context& ctx, const std::string& stage) {
  b.provenance.seed = ctx.seed;
  b.provenance.config_hash = config_hash(b.provenance.config_hash + "|" + ctx.invocation);
  b.provenance.stages.push_back(stage);
}

inline const TiedModelSet& ensure_tied(ModelBundle& b, std::ostream& err) {
  if (!b.tied) {
    err << "note: model is untied; tying losslessly for decoding\n";
    b.tied = cluster_stream_states(b.signs, max_pattern_counts(b.signs));
    b.start = build_subsets(*b.tied);
  }
  if (!b.start) b.start = build_subsets(*b.tied);
  return *b.tied;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  SynthConfig cfg;
  std::size_t reps = 5;
  std::size_t sentences = 0;
  std::size_t min_length = 2;
  std::size_t max_length = 8;
  bool epenthesis = true;
};

inline int run_synth(const SynthArgs& a, const Context& ctx) {
  if (ctx.output.empty()) throw DataError("synth needs --out DIR");
  SynthConfig cfg = a.cfg;
  cfg.seed = ctx.seed;
  const SynthVocab vocab = make_vocab(cfg);
  std::filesystem::create_directories(ctx.output);
  std::mt19937_64 rng(ctx.seed ^ 0x9e3779b97f4a7c15ull);
  if (a.reps > 0) {
    std::vector<GestureSequence> iso;
    for (std::size_t w = 0; w < vocab.signs.size(); ++w)
      for (std::size_t r = 0; r < a.reps; ++r) iso.push_back(sample_sign(vocab.signs[w], rng));
    write_dataset(ctx.output + "/isolated.jsonl", iso);
  }
  if (a.sentences > 0) {
    std::vector<GestureSequence> sents;
    for (std::size_t i = 0; i < a.sentences; ++i)
      sents.push_back(sample_sentence(vocab, vocab.lm, a.epenthesis, a.min_length, a.max_length, rng,
                                      cfg.epenthesis_self_loop)
                          .sequence);
    write_dataset(ctx.output + "/sentences.jsonl", sents);
  }
  ModelBundle truth;
  truth.signs = vocab.signs;
  truth.lm = vocab.lm;
  record_stage(truth, ctx, "synth");
  save_bundle(truth, ctx.output + "/truth.json");
  ctx.out << "wrote " << vocab.signs.size() << " signs to " << ctx.output << "\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string states = "3";
  std::size_t mixtures = 1;
  std::size_t iterations = 20;
  bool normalize = false;
};

inline int run_train(const TrainArgs& a, const Context& ctx) {
  if (ctx.output.empty()) throw DataError("train needs --out FILE");
  std::vector<GestureSequence> data = read_dataset(a.data);
  ModelBundle b;
  if (a.normalize) {
    b.normalization = NormalizationStats::from_sequences(data);
    for (std::size_t i : b.normalization.degenerate_components())
      ctx.err << "warning: feature " << i << " is constant in the training data\n";
  }
  std::map<std::string, std::vector<GestureSequence>> by_sign;
  std::size_t skipped = 0;
  for (auto& seq : data) {
    if (seq.sentence || seq.label.size() != 1) {
      ++skipped;
      continue;
    }
    by_sign[seq.label.front()].push_back(normalize_sequence(seq, b.normalization));
  }
  if (skipped) ctx.err << "warning: ignored " << skipped << " unlabelled or sentence records\n";
  if (by_sign.empty()) throw DataError("dataset '" + a.data + "' has no isolated training samples");
  if (a.states != "3" && a.states != "5" && a.states != "auto")
    throw DataError("--states must be 3, 5 or auto");

  TrainOptions opt;
  opt.mixtures = a.mixtures;
  opt.max_iterations = a.iterations;
  std::vector<std::pair<std::string, std::vector<GestureSequence>>> work(by_sign.begin(), by_sign.end());
  std::vector<SignHMM> models(work.size());
  std::vector<std::string> notes(work.size());
  parallel_for(work.size(), ctx.jobs, [&](std::size_t i) {
    TrainOptions o = opt;
    if (a.states == "auto")
      o.num_states = select_state_count(work[i].second, o).num_states;
    else
      o.num_states = std::stoul(a.states);
    TrainedHMM t = baum_welch_train(work[i].second, work[i].first, o);
    if (t.skipped_sequences)
      notes[i] = "warning: " + work[i].first + ": skipped " + std::to_string(t.skipped_sequences) +
                 " sequences shorter than the state count\n";
    models[i] = std::move(t.model);
  });
  for (const auto& n : notes) ctx.err << n;
  b.signs = std::move(models);
  record_stage(b, ctx, "train");
  save_bundle(b, ctx.output);
  ctx.out << "trained " << b.signs.size() << " sign models\n";
  return kExitOk;
}

// ---- tie ------------------------------------------------------------------

struct TieArgs {
  std::string patterns = "256";
  std::size_t iterations = 50;
};

inline int run_tie(const TieArgs& a, const Context& ctx) {
  if (ctx.output.empty()) throw DataError("tie needs --out FILE");
  ModelBundle b = load_bundle(ctx.model);
  if (b.signs.empty()) throw DataError("model has no trained signs; run train first");
  const PatternCounts counts = parse_pattern_counts(a.patterns, b.signs);
  TyingOptions opt;
  opt.seed = ctx.seed;
  opt.max_iterations = a.iterations;
  std::vector<std::string> warnings;
  b.tied = cluster_stream_states(b.signs, counts, opt, &warnings);
  b.start = build_subsets(*b.tied);
  for (const auto& w : warnings) ctx.err << "warning: " << w << "\n";
  record_stage(b, ctx, "tie");
  save_bundle(b, ctx.output);
  ctx.out << "patterns per stream:";
  for (std::size_t s = 0; s < kNumStreams; ++s) ctx.out << " " << b.layout[s].name << "=" << b.tied->codebook.pattern_count(s);
  ctx.out << "\n";
  return kExitOk;
}

// ---- train-transitions -----------------------------------------------------

struct TransitionArgs {
  std::string data;
  std::size_t states = 1;
  std::size_t tie = 0;
  std::size_t iterations = 10;
  std::size_t min_occurrences = 5;
};

inline int run_train_transitions(const TransitionArgs& a, const Context& ctx) {
  if (ctx.output.empty()) throw DataError("train-transitions needs --out FILE");
  ModelBundle b = load_bundle(ctx.model);
  if (b.signs.empty()) throw DataError("model has no trained signs; run train first");
  std::vector<GestureSequence> data = normalized(read_dataset(a.data), b);
  std::vector<GestureSequence> sentences;
  std::vector<std::vector<SignId>> corpus;
  for (auto& seq : data) {
    if (!seq.sentence) continue;
    std::vector<SignId> ids;
    for (const auto& name : seq.label) {
      const long id = b.find(name);
      if (id < 0) throw DataError("sentence refers to unknown sign '" + name + "'");
      ids.push_back(SignId(id));
    }
    corpus.push_back(std::move(ids));
    sentences.push_back(std::move(seq));
  }
  if (sentences.empty()) throw DataError("dataset '" + a.data + "' has no sentences");
  TransitionTrainOptions opt;
  opt.num_states = a.states;
  opt.max_iterations = a.iterations;
  opt.min_occurrences = a.min_occurrences;
  TransitionTraining tr = train_transitions(sentences, b.signs, opt);
  if (tr.skipped_sentences) ctx.err << "warning: skipped " << tr.skipped_sentences << " sentences too short to align\n";
  TransitionSet set = std::move(tr.set);
  if (a.tie > 0) {
    std::vector<std::string> warnings;
    set = tie_transitions(set, a.tie, ctx.seed, &warnings);
    for (const auto& w : warnings) ctx.err << "warning: " << w << "\n";
  }
  b.transitions = std::move(set);
  b.lm = estimate_bigram(corpus, b.names());
  record_stage(b, ctx, "train-transitions");
  save_bundle(b, ctx.output);
  ctx.out << "transition models: " << b.transitions->models.size() << " for " << b.transitions->num_pairs()
          << " sign pairs (" << tr.untrained.size() << " kept interpolated)\n";
  return kExitOk;
}

// ---- decoding ---------------------------------------------------------------

struct IsolatedArgs {
  std::string data;
  double tau = 1e-3;
  std::size_t start_frames = 3;
  std::size_t nbest = 1;
};

struct ContinuousArgs {
  std::string data;
  double state_beam = kDefaultStateBeam;
  double sign_beam = kDefaultSignBeam;
  double unit_threshold = kDefaultUnitThreshold;
  double lookahead_beam = kInfinity;
  double lm_scale = 1.0;
  double insertion_penalty = 0.0;
  std::string transitions = "auto";
};

struct IsolatedRun {
  std::vector<IsolatedResult> results;
  double seconds = 0.0;
  std::size_t frames = 0;
};

inline IsolatedRun decode_isolated_all(ModelBundle& b, const std::vector<GestureSequence>& data,
                                       const IsolatedArgs& a, const Context& ctx) {
  const TiedModelSet& tms = ensure_tied(b, ctx.err);
  const StateScorer scorer(tms);
  GateConfig gate;
  gate.threshold = a.tau;
  gate.start_frames = a.start_frames;
  if (!(a.tau >= 0.0 && a.tau < 1.0)) throw DataError("--tau must lie in [0, 1)");
  IsolatedRun run;
  run.results.resize(data.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(data.size(), ctx.jobs, [&](std::size_t i) {
    run.results[i] = recognize_isolated(data[i], tms, scorer, *b.start, gate, a.nbest);
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& s : data) run.frames += s.frames.size();
  return run;
}

inline TransitionMode parse_mode(const std::string& text, const ModelBundle& b) {
  if (text == "direct") return TransitionMode::kDirect;
  if (text == "interpolated") return TransitionMode::kInterpolated;
  if (text == "trained") {
    if (!b.transitions) throw DataError("model has no trained transition models");
    return TransitionMode::kTrained;
  }
  if (text == "auto") return b.transitions ? TransitionMode::kTrained : TransitionMode::kInterpolated;
  throw DataError("--transitions must be direct, interpolated, trained or auto");
}

inline const char* mode_name(TransitionMode m) {
  switch (m) {
    case TransitionMode::kDirect: return "direct";
    case TransitionMode::kInterpolated: return "interpolated";
    case TransitionMode::kTrained: return "trained";
  }
  return "?";
}

struct ContinuousRun {
  std::vector<DecodeResult> results;
  std::vector<std::string> failures;  // per utterance, empty on success
  TransitionMode mode = TransitionMode::kInterpolated;
  double seconds = 0.0;
  std::size_t frames = 0;
};

inline ContinuousRun decode_continuous_all(ModelBundle& b, const std::vector<GestureSequence>& data,
                                           const ContinuousArgs& a, const Context& ctx) {
  const TiedModelSet& tms = ensure_tied(b, ctx.err);
  if (!b.lm) {
    ctx.err << "note: model has no bigram; using a uniform one\n";
    b.lm = BigramLM::uniform(b.names());
  }
  NetworkOptions opt;
  opt.lm_scale = a.lm_scale;
  opt.insertion_penalty = a.insertion_penalty;
  ContinuousRun run;
  run.mode = opt.transitions = parse_mode(a.transitions, b);
  const DecodeNetwork net(tms, *b.lm, opt, b.transitions ? &*b.transitions : nullptr);
  BeamConfig beams;
  beams.state_beam = a.state_beam;
  beams.sign_beam = a.sign_beam;
  beams.unit_threshold = a.unit_threshold;
  beams.lookahead_beam = a.lookahead_beam;
  beams.validate();
  run.results.resize(data.size());
  run.failures.resize(data.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(data.size(), ctx.jobs, [&](std::size_t i) {
    try {
      run.results[i] = decode(data[i], net, beams);
    } catch (const SearchFailure& e) {
      run.failures[i] = e.what();
    }
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& s : data) run.frames += s.frames.size();
  return run;
}

inline std::vector<std::string> sign_names(const ModelBundle& b, const std::vector<SignId>& ids) {
  std::vector<std::string> out;
  for (SignId id : ids) out.push_back(b.signs[id].name);
  return out;
}

inline int run_decode_isolated(const IsolatedArgs& a, const Context& ctx) {
  ModelBundle b = load_bundle(ctx.model);
  const auto data = normalized(read_dataset(a.data), b);
  const IsolatedRun run = decode_isolated_all(b, data, a, ctx);
  std::ostringstream lines;
  int status = kExitOk;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = run.results[i];
    nlohmann::json j;
    j["index"] = i;
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& s : r.ranked) ranked.push_back({{"sign", b.signs[s.sign].name}, {"score", s.score}});
    j["ranked"] = ranked;
    j["candidates"] = r.candidates.signs.size();
    j["fallback"] = r.candidates.fallback;
    if (!r.diagnostic.empty()) {
      j["error"] = r.diagnostic;
      status = kExitRecognition;
    }
    lines << j.dump() << "\n";
  }
  if (ctx.output.empty())
    ctx.out << lines.str();
  else
    write_text(ctx.output, lines.str());
  return status;
}

inline int run_decode_continuous(const ContinuousArgs& a, const Context& ctx) {
  ModelBundle b = load_bundle(ctx.model);
  const auto data = normalized(read_dataset(a.data), b);
  const ContinuousRun run = decode_continuous_all(b, data, a, ctx);
  std::ostringstream lines;
  int status = kExitOk;
  for (std::size_t i = 0; i < data.size(); ++i) {
    nlohmann::json j;
    j["index"] = i;
    if (!run.failures[i].empty()) {
      j["error"] = run.failures[i];
      status = kExitRecognition;
    } else {
      const auto& r = run.results[i];
      j["signs"] = sign_names(b, r.signs);
      nlohmann::json segs = nlohmann::json::array();
      for (const auto& s : r.segments)
        segs.push_back({{"sign", b.signs[s.sign].name}, {"first_frame", s.first_frame}, {"last_frame", s.last_frame}});
      j["segments"] = segs;
      j["score"] = r.score;
    }
    lines << j.dump() << "\n";
  }
  if (ctx.output.empty())
    ctx.out << lines.str();
  else
    write_text(ctx.output, lines.str());
  return status;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string mode = "isolated";
  IsolatedArgs isolated;
  ContinuousArgs continuous;
};

inline int run_eval(const EvalArgs& a, const Context& ctx) {
  ModelBundle b = load_bundle(ctx.model);
  const std::string& path = a.mode == "isolated" ? a.isolated.data : a.continuous.data;
  const auto data = normalized(read_dataset(path), b);
  if (data.empty()) throw DataError("dataset '" + path + "' is empty");
  nlohmann::json report;
  report["mode"] = a.mode;
  report["utterances"] = data.size();
  std::ostringstream text;
  int status = kExitOk;

  if (a.mode == "isolated") {
    const IsolatedRun run = decode_isolated_all(b, data, a.isolated, ctx);
    std::size_t correct = 0, labelled = 0, recalled = 0, evaluations = 0, fallbacks = 0, candidates = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& r = run.results[i];
      evaluations += r.viterbi_evaluations;
      fallbacks += r.candidates.fallback;
      candidates += r.candidates.signs.size();
      if (!r.diagnostic.empty()) status = kExitRecognition;
      if (data[i].label.size() != 1) continue;
      ++labelled;
      const long truth = b.find(data[i].label.front());
      if (!r.ranked.empty() && long(r.ranked.front().sign) == truth) ++correct;
      if (truth >= 0 && std::binary_search(r.candidates.signs.begin(), r.candidates.signs.end(), SignId(truth)))
        ++recalled;
    }
    if (labelled == 0) throw DataError("dataset has no labelled isolated samples");
    const double acc = double(correct) / double(labelled);
    report["accuracy"] = acc;
    report["correct"] = correct;
    report["labelled"] = labelled;
    report["candidate_recall"] = double(recalled) / double(labelled);
    report["viterbi_evaluations"] = evaluations;
    report["mean_candidates"] = double(candidates) / double(data.size());
    report["fallbacks"] = fallbacks;
    report["seconds"] = run.seconds;
    report["frames"] = run.frames;
    text << "Isolated recognition\n"
         << "  samples            " << labelled << "\n"
         << "  accuracy           " << std::fixed << std::setprecision(2) << 100.0 * acc << "%\n"
         << "  candidate recall   " << 100.0 * double(recalled) / double(labelled) << "%\n"
         << "  mean candidates    " << double(candidates) / double(data.size()) << "\n"
         << "  Viterbi matches    " << evaluations << "\n"
         << "  time               " << std::setprecision(3) << run.seconds << " s\n";
  } else if (a.mode == "continuous") {
    const ContinuousRun run = decode_continuous_all(b, data, a.continuous, ctx);
    ErrorCounts total;
    nlohmann::json utts = nlohmann::json::array();
    DecodeStats agg;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<std::string> hyp;
      if (run.failures[i].empty()) {
        hyp = sign_names(b, run.results[i].signs);
        const auto& st = run.results[i].stats;
        agg.tokens += st.tokens;
        agg.state_pruned += st.state_pruned;
        agg.sign_exits_pruned += st.sign_exits_pruned;
        agg.fast_match_gated += st.fast_match_gated;
        agg.lookahead_gated += st.lookahead_gated;
        agg.transition_entries += st.transition_entries;
      } else {
        ++failed;
        status = kExitRecognition;
      }
      const ErrorCounts c = align(data[i].label, hyp);
      total += c;
      nlohmann::json u{{"index", i},   {"reference", data[i].label}, {"hypothesis", hyp},
                       {"D", c.deletions}, {"I", c.insertions},        {"S", c.substitutions},
                       {"N", c.reference}};
      if (!run.failures[i].empty()) u["error"] = run.failures[i];
      utts.push_back(std::move(u));
    }
    if (total.reference == 0) throw DataError("dataset has no reference signs");
    const double wcr = word_correct_rate(total);
    report["transitions"] = mode_name(run.mode);
    report["D"] = total.deletions;
    report["I"] = total.insertions;
    report["S"] = total.substitutions;
    report["N"] = total.reference;
    report["word_correct_rate"] = wcr;
    report["failed_utterances"] = failed;
    report["seconds"] = run.seconds;
    report["frames"] = run.frames;
    report["pruning"] = {{"live_tokens", agg.tokens},
                         {"state_pruned", agg.state_pruned},
                         {"sign_exits_pruned", agg.sign_exits_pruned},
                         {"fast_match_gated", agg.fast_match_gated},
                         {"lookahead_gated", agg.lookahead_gated},
                         {"transition_entries", agg.transition_entries}};
    report["per_utterance"] = utts;
    std::ostringstream errs;
    errs << "D=" << total.deletions << ", I=" << total.insertions << ", S=" << total.substitutions
         << ", N=" << total.reference;
    text << std::left << std::setw(22) << "Transition models" << std::setw(34) << "Recognition errors"
         << "Word correct rate\n"
         << std::setw(22) << mode_name(run.mode) << std::setw(34) << errs.str() << std::fixed
         << std::setprecision(2) << 100.0 * wcr << "%\n"
         << "time " << std::setprecision(3) << run.seconds << " s for " << run.frames << " frames\n";
  } else {
    throw DataError("--mode must be isolated or continuous");
  }
  ctx.out << text.str();
  if (!ctx.output.empty()) write_text(ctx.output, report.dump(2) + "\n");
  return status;
}

// ---- entry point -------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sign recognition with stream-tied HMMs"};
  app.require_subcommand(1);
  Context ctx(out, err);
  // The config hash covers options that change results, not paths or threads.
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    const std::string flag = arg.substr(0, arg.find('='));
    if (flag == "--jobs" || flag == "--out" || flag == "--data" || flag == "--model") {
      if (flag == arg) ++i;
      continue;
    }
    ctx.invocation += (ctx.invocation.empty() ? "" : " ") + arg;
  }

  auto common = [&](CLI::App* sub, bool needs_model) {
    sub->add_option("--seed", ctx.seed, "Random seed")->capture_default_str();
    sub->add_option("--jobs", ctx.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--out", ctx.output, "Output file or directory");
    auto* m = sub->add_option("--model", ctx.model, "Model bundle");
    if (needs_model) m->required()->check(CLI::ExistingFile);
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic vocabulary and datasets");
  common(s, false);
  s->add_option("--vocab", synth.cfg.vocab_size)->capture_default_str();
  s->add_option("--states", synth.cfg.states_per_sign)->capture_default_str();
  s->add_option("--mixtures", synth.cfg.mixtures)->capture_default_str();
  s->add_option("--separation", synth.cfg.separation)->capture_default_str();
  s->add_option("--noise", synth.cfg.noise_std)->capture_default_str();
  s->add_option("--pattern-pool", synth.cfg.patterns_per_stream)->capture_default_str();
  s->add_option("--start-postures", synth.cfg.start_postures)->capture_default_str();
  s->add_option("--start-separation", synth.cfg.start_separation)->capture_default_str();
  s->add_option("--self-loop", synth.cfg.self_loop)->capture_default_str();
  s->add_option("--epenthesis-self-loop", synth.cfg.epenthesis_self_loop)->capture_default_str();
  s->add_option("--successors", synth.cfg.successors_per_sign)->capture_default_str();
  s->add_option("--reps", synth.reps, "Isolated samples per sign")->capture_default_str();
  s->add_option("--sentences", synth.sentences)->capture_default_str();
  s->add_option("--min-length", synth.min_length)->capture_default_str();
  s->add_option("--max-length", synth.max_length)->capture_default_str();
  s->add_flag("!--no-epenthesis", synth.epenthesis, "Concatenate signs without transition frames");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train one HMM per sign from isolated samples");
  common(t, false);
  t->add_option("--data", train.data)->required()->check(CLI::ExistingFile);
  t->add_option("--states", train.states, "3, 5 or auto")->capture_default_str();
  t->add_option("--mixtures", train.mixtures)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--iterations", train.iterations)->capture_default_str();
  t->add_flag("--normalize", train.normalize, "Min-max normalize features from the training data");

  TieArgs tie;
  auto* ti = app.add_subcommand("tie", "Tie stream densities and build the start codebook");
  common(ti, true);
  ti->add_option("--patterns", tie.patterns, "Lp,Lo,Ls,Rp,Ro,Rs, one value for all, or max")->capture_default_str();
  ti->add_option("--iterations", tie.iterations)->capture_default_str();

  TransitionArgs trans;
  auto* tt = app.add_subcommand("train-transitions", "Train movement transition models and the bigram");
  common(tt, true);
  tt->add_option("--data", trans.data)->required()->check(CLI::ExistingFile);
  tt->add_option("--states", trans.states)->capture_default_str()->check(CLI::IsMember({1, 3}));
  tt->add_option("--tie", trans.tie, "Shared transition model count (0 keeps all)")->capture_default_str();
  tt->add_option("--iterations", trans.iterations)->capture_default_str();
  tt->add_option("--min-occurrences", trans.min_occurrences)->capture_default_str();

  auto isolated_flags = [](CLI::App* sub, IsolatedArgs& a) {
    sub->add_option("--tau", a.tau, "Codeword posterior threshold")->capture_default_str();
    sub->add_option("--start-frames", a.start_frames)->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--nbest", a.nbest, "Ranked results per sample (0 = all)")->capture_default_str();
  };
  auto continuous_flags = [](CLI::App* sub, ContinuousArgs& a) {
    sub->add_option("--state-beam", a.state_beam)->capture_default_str();
    sub->add_option("--sign-beam", a.sign_beam)->capture_default_str();
    sub->add_option("--unit-threshold", a.unit_threshold)->capture_default_str();
    sub->add_option("--lookahead-beam", a.lookahead_beam)->capture_default_str();
    sub->add_option("--lm-scale", a.lm_scale)->capture_default_str();
    sub->add_option("--insertion-penalty", a.insertion_penalty)->capture_default_str();
    sub->add_option("--transitions", a.transitions, "direct, interpolated, trained or auto")->capture_default_str();
  };

  IsolatedArgs iso;
  auto* di = app.add_subcommand("decode-isolated", "Recognize isolated signs");
  common(di, true);
  di->add_option("--data", iso.data)->required()->check(CLI::ExistingFile);
  isolated_flags(di, iso);

  ContinuousArgs cont;
  auto* dc = app.add_subcommand("decode-continuous", "Recognize sign sentences");
  common(dc, true);
  dc->add_option("--data", cont.data)->required()->check(CLI::ExistingFile);
  continuous_flags(dc, cont);

  EvalArgs ev;
  std::string eval_data;
  auto* e = app.add_subcommand("eval", "Score recognition against labels");
  common(e, true);
  e->add_option("--data", eval_data)->required()->check(CLI::ExistingFile);
  e->add_option("--mode", ev.mode, "isolated or continuous")->capture_default_str()->check(CLI::IsMember({"isolated", "continuous"}));
  isolated_flags(e, ev.isolated);
  continuous_flags(e, ev.continuous);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, ctx);
    if (t->parsed()) return run_train(train, ctx);
    if (ti->parsed()) return run_tie(tie, ctx);
    if (tt->parsed()) return run_train_transitions(trans, ctx);
    if (di->parsed()) return run_decode_isolated(iso, ctx);
    if (dc->parsed()) return run_decode_continuous(cont, ctx);
    if (e->parsed()) {
      ev.isolated.data = ev.continuous.data = eval_data;
      return run_eval(ev, ctx);
    }
  } catch (const SearchFailure& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRecognition;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace signrec::cli
