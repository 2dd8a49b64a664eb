#pragma once

#include <cstddef>
#include <tuple>
#include <vector>

#include "signrec/error.hpp"

namespace signrec {

struct ErrorCounts {
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t substitutions = 0;
  std::size_t reference = 0;  // N

  std::size_t errors() const { return deletions + insertions + substitutions; }

  ErrorCounts& operator+=(const ErrorCounts& o) {
    deletions += o.deletions;
    insertions += o.insertions;
    substitutions += o.substitutions;
    reference += o.reference;
    return *this;
  }
  bool operator==(const ErrorCounts&) const = default;
};

// Minimum edit alignment with unit costs. Among alignments of equal total
// cost, fewer substitutions win, then fewer insertions.
template <class T>
ErrorCounts align(const std::vector<T>& ref, const std::vector<T>& hyp) {
  using Cost = std::tuple<std::size_t, std::size_t, std::size_t>;  // total, S, I
  struct Cell {
    Cost cost;
    std::size_t d, i, s;
  };
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t r, std::size_t h) -> Cell& { return dp[r * (m + 1) + h]; };
  at(0, 0) = {{0, 0, 0}, 0, 0, 0};
  for (std::size_t r = 0; r <= n; ++r) {
    for (std::size_t h = 0; h <= m; ++h) {
      if (r == 0 && h == 0) continue;
      Cell best{};
      bool have = false;
      auto consider = [&](const Cell& from, std::size_t dd, std::size_t di, std::size_t ds) {
        const auto& [t, s, i] = from.cost;
        Cell c{{t + dd + di + ds, s + ds, i + di}, from.d + dd, from.i + di, from.s + ds};
        if (!have || c.cost < best.cost) {
          best = c;
          have = true;
        }
      };
      if (r > 0 && h > 0) {
        const bool match = ref[r - 1] == hyp[h - 1];
        consider(at(r - 1, h - 1), 0, 0, match ? 0 : 1);
      }
      if (r > 0) consider(at(r - 1, h), 1, 0, 0);
      if (h > 0) consider(at(r, h - 1), 0, 1, 0);
      at(r, h) = best;
    }
  }
  const Cell& end = at(n, m);
  return {end.d, end.i, end.s, n};
}

// (N - D - I - S) / N, unclamped: heavy insertion gives a negative rate.
inline double word_correct_rate(const ErrorCounts& c) {
  if (c.reference == 0) throw DataError("word correct rate needs at least one reference sign");
  return (double(c.reference) - double(c.deletions) - double(c.insertions) - double(c.substitutions)) /
         double(c.reference);
}

}  // namespace signrec
