#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <tuple>

namespace vlink::oracle {

// Memoized recursion over prefixes for the optimal string alignment distance.
inline std::size_t osa_distance(const std::u32string& a, const std::u32string& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  auto rec = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min({self(self, i - 1, j) + 1, self(self, i, j - 1) + 1,
                                 self(self, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
    if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
      best = std::min(best, self(self, i - 2, j - 2) + 1);
    }
    memo[key] = best;
    return best;
  };
  return rec(rec, a.size(), b.size());
}

inline double dl_similarity(const std::u32string& a, const std::u32string& b) {
  const std::size_t m = std::max(a.size(), b.size());
  if (m == 0) return 1.0;
  return 1.0 - static_cast<double>(osa_distance(a, b)) / static_cast<double>(m);
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

// Exhaustive scan of every start pair for the longest common block, earliest in a, then in b.
inline std::size_t ratcliff_matches(const std::u32string& a, const std::u32string& b) {
  std::size_t best = 0, bi = 0, bj = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      std::size_t k = 0;
      while (i + k < a.size() && j + k < b.size() && a[i + k] == b[j + k]) ++k;
      if (k > best) {
        best = k;
        bi = i;
        bj = j;
      }
    }
  }
  if (best == 0) return 0;
  return best + ratcliff_matches(a.substr(0, bi), b.substr(0, bj)) +
         ratcliff_matches(a.substr(bi + best), b.substr(bj + best));
}

inline double ratcliff(const std::u32string& a, const std::u32string& b) {
  if (a.empty() && b.empty()) return 1.0;
  const std::size_t m = b < a ? ratcliff_matches(b, a) : ratcliff_matches(a, b);
  return 2.0 * static_cast<double>(m) / static_cast<double>(a.size() + b.size());
}

}  // namespace vlink::oracle
