#pragma once

// JSON-lines gesture datasets. Each line holds one record:
//   {"label": "HELLO" | ["I", "GO"], "frames": [[48 numbers], ...]}
// A string label marks an isolated sign, an array a sentence.

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "signrec/error.hpp"
#include "signrec/frames.hpp"

namespace signrec {

namespace detail {

inline DataError record_error(const std::string& source, std::size_t line, const std::string& what) {
  return DataError(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline GestureSequence parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  GestureSequence seq;
  if (j.contains("label")) {
    const auto& label = j.at("label");
    if (label.is_string()) {
      seq.label.push_back(label.get<std::string>());
    } else if (label.is_array()) {
      for (const auto& l : label) {
        if (!l.is_string()) throw DataError("sentence label entries must be strings");
        seq.label.push_back(l.get<std::string>());
      }
      seq.sentence = true;
    } else if (!label.is_null()) {
      throw DataError("label must be a string or an array of strings");
    }
  }
  if (!j.contains("frames") || !j.at("frames").is_array()) throw DataError("record has no frame array");
  for (const auto& row : j.at("frames")) {
    if (!row.is_array()) throw DataError("frame is not an array");
    if (row.size() != kFrameDim)
      throw DimensionMismatch("frame has " + std::to_string(row.size()) + " values, expected 48");
    Frame f;
    for (std::size_t i = 0; i < kFrameDim; ++i) {
      if (!row[i].is_number()) throw DataError("frame value is not a number");
      f[i] = row[i].get<double>();
    }
    seq.frames.push_back(f);
  }
  return seq;
}

inline nlohmann::json record_json(const GestureSequence& seq) {
  nlohmann::json j;
  if (seq.sentence || seq.label.size() != 1)
    j["label"] = seq.label;
  else
    j["label"] = seq.label.front();
  nlohmann::json frames = nlohmann::json::array();
  for (const Frame& f : seq.frames) frames.push_back(f);
  j["frames"] = std::move(frames);
  return j;
}

// Blank lines are skipped; errors carry the source name and 1-based line.
inline std::vector<GestureSequence> read_dataset(std::istream& in, const std::string& source = "<stream>") {
  std::vector<GestureSequence> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw detail::record_error(source, line, std::string("malformed JSON: ") + e.what());
    }
    try {
      out.push_back(parse_record(j));
    } catch (const Error& e) {
      throw detail::record_error(source, line, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw detail::record_error(source, line, e.what());
    }
  }
  return out;
}

inline std::vector<GestureSequence> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return read_dataset(in, path);
}

inline void write_dataset(std::ostream& out, const std::vector<GestureSequence>& data) {
  for (const auto& seq : data) out << record_json(seq).dump() << '\n';
}

inline void write_dataset(const std::string& path, const std::vector<GestureSequence>& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_dataset(out, data);
  if (!out) throw DataError("failed writing dataset '" + path + "'");
}

}  // namespace signrec
