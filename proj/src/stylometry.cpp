#include "vlink/stylometry.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "vlink/error.hpp"
#include "vlink/util.hpp"

namespace vlink::stylometry {

std::size_t dl_distance(std::u32string_view a, std::u32string_view b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  // Three rolling rows: i-2, i-1, i.
  std::vector<std::size_t> prev2(m + 1), prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      std::size_t best = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
        best = std::min(best, prev2[j - 2] + 1);
      }
      cur[j] = best;
    }
    std::swap(prev2, prev);
    std::swap(prev, cur);
  }
  return prev[m];
}

double dl_similarity(std::string_view a, std::string_view b) {
  const auto ua = util::utf8_decode(a);
  const auto ub = util::utf8_decode(b);
  const std::size_t longest = std::max(ua.size(), ub.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(dl_distance(ua, ub)) / static_cast<double>(longest);
}

double jaccard_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> sa(a), sb(b);
  std::sort(sa.begin(), sa.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  std::sort(sb.begin(), sb.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa[i] == sb[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (sa[i] < sb[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double jaccard_similarity(std::string_view a, std::string_view b) {
  auto to_vec = [](std::string_view s) {
    std::vector<std::string> out;
    for (auto t : util::split_whitespace(s)) out.emplace_back(t);
    return out;
  };
  return jaccard_similarity(to_vec(a), to_vec(b));
}

namespace {

struct Block {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t len = 0;
};

// Longest common substring by suffix-length DP; scanning i then j ascending keeps the
// first maximum, which is the earliest start in a, then in b.
Block longest_block(std::u32string_view a, std::u32string_view b) {
  Block best;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  // Track by end positions; a block ending at (i,j) with length L starts at (i-L, j-L).
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
    }
    std::swap(prev, cur);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t len = prev[j];
      if (len == 0) continue;
      const std::size_t si = i - len;
      const std::size_t sj = j - len;
      if (len > best.len || (len == best.len && (si < best.i || (si == best.i && sj < best.j)))) {
        best = {si, sj, len};
      }
    }
  }
  return best;
}

}  // namespace

std::size_t ratcliff_matches(std::u32string_view a, std::u32string_view b) {
  if (a.empty() || b.empty()) return 0;
  const Block blk = longest_block(a, b);
  if (blk.len == 0) return 0;
  return blk.len + ratcliff_matches(a.substr(0, blk.i), b.substr(0, blk.j)) +
         ratcliff_matches(a.substr(blk.i + blk.len), b.substr(blk.j + blk.len));
}

double ratcliff_obershelp(std::string_view a, std::string_view b) {
  auto ua = util::utf8_decode(a);
  auto ub = util::utf8_decode(b);
  // Block ties depend on argument order; a canonical order makes the score symmetric.
  if (ub < ua) std::swap(ua, ub);
  const std::size_t total = ua.size() + ub.size();
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(ratcliff_matches(ua, ub)) / static_cast<double>(total);
}

StyleSimilarity avg_pair_similarity(std::string_view a, std::string_view b) {
  StyleSimilarity s;
  s.dl = dl_similarity(a, b);
  s.jac = jaccard_similarity(a, b);
  s.ro = ratcliff_obershelp(a, b);
  s.avg = (s.dl + s.jac + s.ro) / 3.0;
  return s;
}

namespace {

std::vector<std::size_t> capped(std::vector<std::size_t> idx, const ProfileOptions& options,
                                std::string_view vendor, std::string_view market) {
  if (options.cap == 0 || idx.size() <= options.cap) return idx;
  util::Rng rng(util::derive_seed(options.seed, std::string(vendor) + "\x1f" + std::string(market)));
  const auto pick = rng.sample(idx.size(), options.cap);
  std::vector<std::size_t> out;
  out.reserve(pick.size());
  for (auto p : pick) out.push_back(idx[p]);
  return out;
}

}  // namespace

std::optional<double> vendor_similarity_profile(const corpus::Corpus& corpus, std::string_view vendor,
                                                std::string_view market_x, std::string_view market_y,
                                                const ProfileOptions& options) {
  const auto xs = capped(corpus.indices_of(vendor, market_x), options, vendor, market_x);
  if (xs.empty()) {
    throw NotFoundError("vendor '" + std::string(vendor) + "' has no ads in market '" + std::string(market_x) + "'");
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (market_x == market_y) {
    for (std::size_t p = 0; p < xs.size(); ++p) {
      for (std::size_t q = p + 1; q < xs.size(); ++q) pairs.emplace_back(xs[p], xs[q]);
    }
    if (pairs.empty()) return std::nullopt;
  } else {
    const auto ys = capped(corpus.indices_of(vendor, market_y), options, vendor, market_y);
    if (ys.empty()) {
      throw NotFoundError("vendor '" + std::string(vendor) + "' has no ads in market '" + std::string(market_y) + "'");
    }
    for (auto x : xs) {
      for (auto y : ys) pairs.emplace_back(x, y);
    }
  }
  std::vector<double> scores(pairs.size());
  util::parallel_for(pairs.size(), options.workers, [&](std::size_t k) {
    scores[k] = avg_pair_similarity(corpus[pairs[k].first].merged_text, corpus[pairs[k].second].merged_text).avg;
  });
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

std::vector<ProfileRow> sanity_profiles(const corpus::Corpus& corpus, const ProfileOptions& options) {
  std::map<std::string, std::map<std::string, std::size_t>> presence;
  for (const auto& ad : corpus.ads()) ++presence[ad.vendor_norm][ad.market];
  std::vector<ProfileRow> rows;
  for (const auto& [vendor, markets] : presence) {
    for (const auto& [market, count] : markets) {
      if (count < 2) continue;
      if (auto p = vendor_similarity_profile(corpus, vendor, market, market, options)) {
        rows.push_back({vendor, market, market, *p});
      }
    }
    for (auto x = markets.begin(); x != markets.end(); ++x) {
      for (auto y = std::next(x); y != markets.end(); ++y) {
        auto p = vendor_similarity_profile(corpus, vendor, x->first, y->first, options);
        rows.push_back({vendor, x->first, y->first, *p});
      }
    }
  }
  return rows;
}

std::vector<std::string> flag_identical_vendors(const corpus::Corpus& corpus, const ProfileOptions& options) {
  std::map<std::string, std::set<std::string>> presence;
  for (const auto& ad : corpus.ads()) presence[ad.vendor_norm].insert(ad.market);
  std::vector<std::string> flagged;
  for (const auto& [vendor, markets] : presence) {
    bool identical = false;
    for (auto x = markets.begin(); x != markets.end() && !identical; ++x) {
      for (auto y = std::next(x); y != markets.end() && !identical; ++y) {
        identical = vendor_similarity_profile(corpus, vendor, *x, *y, options) == 1.0;
      }
    }
    if (identical) flagged.push_back(vendor);
  }
  return flagged;
}

std::string sanity_csv(const std::vector<ProfileRow>& rows) {
  std::string out = "vendor,market_pair,mean_avg_similarity\n";
  for (const auto& r : rows) {
    out += util::csv_field(r.vendor) + "," + util::csv_field(r.market_x + "-" + r.market_y) + "," +
           util::format_double(r.mean_avg_similarity) + "\n";
  }
  return out;
}

}  // namespace vlink::stylometry
