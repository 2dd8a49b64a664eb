#pragma once

// Model persistence. A bundle is one versioned JSON document holding every
// trained stage; later stages are optional. Doubles are written in shortest
// round-trip form, so save followed by load reproduces parameters exactly.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "signrec/decoder.hpp"
#include "signrec/density.hpp"
#include "signrec/epenthesis.hpp"
#include "signrec/error.hpp"
#include "signrec/frames.hpp"
#include "signrec/hmm.hpp"
#include "signrec/isolated.hpp"
#include "signrec/tying.hpp"

namespace signrec {

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> stages;

  bool operator==(const Provenance&) const = default;
};

struct ModelBundle {
  static constexpr const char* kFormat = "signrec-model";
  static constexpr int kVersion = 1;

  StreamLayout layout = StreamLayout::standard();
  NormalizationStats normalization = NormalizationStats::identity();
  std::vector<SignHMM> signs;
  std::optional<TiedModelSet> tied;
  std::optional<StartCodebook> start;
  std::optional<TransitionSet> transitions;
  std::optional<BigramLM> lm;
  Provenance provenance;

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& s : signs) out.push_back(s.name);
    return out;
  }

  // Sign id by name, or -1.
  long find(const std::string& name) const {
    for (std::size_t i = 0; i < signs.size(); ++i)
      if (signs[i].name == name) return long(i);
    return -1;
  }

  bool operator==(const ModelBundle&) const = default;
};

// FNV-1a over a configuration string, as 16 hex digits.
inline std::string config_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

using nlohmann::json;

inline json density_json(const StreamDensity& d) {
  return {{"dim", d.dim()}, {"weights", std::vector<double>(d.weights().begin(), d.weights().end())},
          {"means", d.means()}, {"variances", d.variances()}};
}

inline StreamDensity density_from(const json& j) {
  return StreamDensity(j.at("dim").get<std::size_t>(), j.at("weights").get<std::vector<double>>(),
                       j.at("means").get<std::vector<double>>(), j.at("variances").get<std::vector<double>>());
}

inline json state_json(const StateModel& s) {
  json a = json::array();
  for (const auto& d : s.streams) a.push_back(density_json(d));
  return a;
}

inline StateModel state_from(const json& j) {
  if (!j.is_array() || j.size() != kNumStreams) throw DataError("state must hold six stream densities");
  StateModel s;
  for (std::size_t k = 0; k < kNumStreams; ++k) s.streams[k] = density_from(j[k]);
  return s;
}

inline json states_json(const std::vector<StateModel>& states) {
  json a = json::array();
  for (const auto& s : states) a.push_back(state_json(s));
  return a;
}

inline std::vector<StateModel> states_from(const json& j) {
  std::vector<StateModel> out;
  for (const auto& s : j) out.push_back(state_from(s));
  return out;
}

inline json layout_json(const StreamLayout& layout) {
  json a = json::array();
  for (const auto& s : layout.streams()) a.push_back({{"name", s.name}, {"dim", s.dim}, {"offset", s.offset}});
  return a;
}

inline StreamLayout layout_from(const json& j) {
  if (!j.is_array() || j.size() != kNumStreams) throw DataError("layout must list six streams");
  std::array<StreamSpec, kNumStreams> specs;
  for (std::size_t k = 0; k < kNumStreams; ++k)
    specs[k] = {j[k].at("name").get<std::string>(), j[k].at("dim").get<std::size_t>(),
                j[k].at("offset").get<std::size_t>()};
  return StreamLayout(specs);
}

inline json sign_json(const SignHMM& h) {
  return {{"name", h.name}, {"self_loop", h.self_loop}, {"occupancy", h.occupancy}, {"states", states_json(h.states)}};
}

inline SignHMM sign_from(const json& j) {
  SignHMM h;
  h.name = j.at("name").get<std::string>();
  h.self_loop = j.at("self_loop").get<std::vector<double>>();
  h.occupancy = j.at("occupancy").get<std::vector<double>>();
  h.states = states_from(j.at("states"));
  return h;
}

inline json tied_json(const TiedModelSet& t) {
  json signs = json::array();
  for (const auto& s : t.signs) signs.push_back({{"name", s.name}, {"self_loop", s.self_loop}});
  json patterns = json::array();
  for (const auto& stream : t.codebook.patterns) {
    json a = json::array();
    for (const auto& d : stream) a.push_back(density_json(d));
    patterns.push_back(std::move(a));
  }
  return {{"signs", signs}, {"mapping", t.mapping}, {"patterns", patterns}};
}

inline TiedModelSet tied_from(const json& j) {
  TiedModelSet t;
  for (const auto& s : j.at("signs"))
    t.signs.push_back({s.at("name").get<std::string>(), s.at("self_loop").get<std::vector<double>>()});
  t.mapping = j.at("mapping").get<std::vector<std::vector<PatternRow>>>();
  const auto& patterns = j.at("patterns");
  if (!patterns.is_array() || patterns.size() != kNumStreams) throw DataError("codebook must hold six streams");
  for (std::size_t k = 0; k < kNumStreams; ++k)
    for (const auto& d : patterns[k]) t.codebook.patterns[k].push_back(density_from(d));
  t.validate();
  return t;
}

inline json start_json(const StartCodebook& cb) {
  json streams = json::array();
  for (const auto& s : cb.streams) streams.push_back({{"codewords", s.codewords}, {"subsets", s.subsets}});
  return {{"vocabulary_size", cb.vocabulary_size}, {"streams", streams}};
}

inline StartCodebook start_from(const json& j) {
  StartCodebook cb;
  cb.vocabulary_size = j.at("vocabulary_size").get<std::size_t>();
  const auto& streams = j.at("streams");
  if (!streams.is_array() || streams.size() != kNumStreams) throw DataError("start codebook must hold six streams");
  for (std::size_t k = 0; k < kNumStreams; ++k) {
    cb.streams[k].codewords = streams[k].at("codewords").get<std::vector<std::uint32_t>>();
    cb.streams[k].subsets = streams[k].at("subsets").get<std::vector<std::vector<SignId>>>();
  }
  return cb;
}

inline json transitions_json(const TransitionSet& t) {
  json models = json::array();
  for (const auto& m : t.models)
    models.push_back({{"from", m.from}, {"to", m.to}, {"self_loop", m.self_loop}, {"states", states_json(m.states)}});
  json pairs = json::array();
  for (const auto& [pair, idx] : t.pair_model) pairs.push_back({pair.first, pair.second, idx});
  return {{"num_states", t.num_states}, {"models", models}, {"pairs", pairs}};
}

inline TransitionSet transitions_from(const json& j) {
  TransitionSet t;
  t.num_states = j.at("num_states").get<std::size_t>();
  for (const auto& m : j.at("models")) {
    TransitionModel tm;
    tm.from = m.at("from").get<SignId>();
    tm.to = m.at("to").get<SignId>();
    tm.self_loop = m.at("self_loop").get<std::vector<double>>();
    tm.states = states_from(m.at("states"));
    if (tm.states.empty() || tm.self_loop.size() != tm.states.size())
      throw DataError("transition model state/self-loop mismatch");
    t.models.push_back(std::move(tm));
  }
  for (const auto& p : j.at("pairs")) {
    const auto idx = p.at(2).get<std::uint32_t>();
    if (idx >= t.models.size()) throw DataError("transition pair refers to a missing model");
    t.pair_model[{p.at(0).get<SignId>(), p.at(1).get<SignId>()}] = idx;
  }
  return t;
}

inline json lm_json(const BigramLM& lm) {
  return {{"vocab", lm.vocab()}, {"start", lm.start_probs()}, {"probs", lm.probs()}};
}

inline BigramLM lm_from(const json& j) {
  return BigramLM(j.at("vocab").get<std::vector<std::string>>(), j.at("start").get<std::vector<double>>(),
                  j.at("probs").get<std::vector<double>>());
}

}  // namespace detail

inline nlohmann::json bundle_json(const ModelBundle& b) {
  using nlohmann::json;
  json j;
  j["format"] = ModelBundle::kFormat;
  j["version"] = ModelBundle::kVersion;
  j["layout"] = detail::layout_json(b.layout);
  j["normalization"] = {{"min", b.normalization.min}, {"max", b.normalization.max}};
  json signs = json::array();
  for (const auto& s : b.signs) signs.push_back(detail::sign_json(s));
  j["signs"] = std::move(signs);
  if (b.tied) j["tied"] = detail::tied_json(*b.tied);
  if (b.start) j["start_codebook"] = detail::start_json(*b.start);
  if (b.transitions) j["transitions"] = detail::transitions_json(*b.transitions);
  if (b.lm) j["bigram"] = detail::lm_json(*b.lm);
  j["provenance"] = {{"seed", b.provenance.seed}, {"config_hash", b.provenance.config_hash},
                     {"stages", b.provenance.stages}};
  return j;
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != ModelBundle::kFormat)
      throw DataError("not a model bundle");
    const int version = j.at("version").get<int>();
    if (version != ModelBundle::kVersion)
      throw DataError("unsupported model bundle version " + std::to_string(version) + " (expected " +
                      std::to_string(ModelBundle::kVersion) + ")");
    ModelBundle b;
    b.layout = detail::layout_from(j.at("layout"));
    b.normalization.min = j.at("normalization").at("min").get<Frame>();
    b.normalization.max = j.at("normalization").at("max").get<Frame>();
    for (const auto& s : j.at("signs")) {
      b.signs.push_back(detail::sign_from(s));
      b.signs.back().validate(b.layout);
    }
    if (j.contains("tied")) b.tied = detail::tied_from(j.at("tied"));
    if (j.contains("start_codebook")) b.start = detail::start_from(j.at("start_codebook"));
    if (j.contains("transitions")) b.transitions = detail::transitions_from(j.at("transitions"));
    if (j.contains("bigram")) b.lm = detail::lm_from(j.at("bigram"));
    const auto& p = j.at("provenance");
    b.provenance.seed = p.at("seed").get<std::uint64_t>();
    b.provenance.config_hash = p.at("config_hash").get<std::string>();
    b.provenance.stages = p.at("stages").get<std::vector<std::string>>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model bundle: ") + e.what());
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(std::string("invalid model bundle: ") + e.what());
  }
}

inline std::string save_bundle_string(const ModelBundle& b) { return bundle_json(b).dump(1); }

inline ModelBundle load_bundle_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("model bundle is not valid JSON: ") + e.what());
  }
  return bundle_from_json(j);
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model '" + path + "'");
  out << save_bundle_string(b) << '\n';
  if (!out) throw DataError("failed writing model '" + path + "'");
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_bundle_string(ss.str());
}

}  // namespace signrec
