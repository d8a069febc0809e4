#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vlink/corpus.hpp"

namespace vlink::stylometry {

// Character metrics operate on Unicode code points; jaccard on whitespace token sets.

/// Restricted Damerau-Levenshtein (optimal string alignment) edit distance.
std::size_t dl_distance(std::u32string_view a, std::u32string_view b);
/// 1 - D(a,b) / max(|a|,|b|); 1 when both are empty.
double dl_similarity(std::string_view a, std::string_view b);

double jaccard_similarity(const std::vector<std::string>& a, const std::vector<std::string>& b);
/// Jaccard over the whitespace token sets of two texts.
double jaccard_similarity(std::string_view a, std::string_view b);

/// Total length of recursively matched longest common blocks. Among equally long
/// blocks the one starting earliest in `a`, then earliest in `b`, is taken.
std::size_t ratcliff_matches(std::u32string_view a, std::u32string_view b);
/// 2M / (|a| + |b|) with M taken over the code-point-wise smaller string first; 1 when both are empty.
double ratcliff_obershelp(std::string_view a, std::string_view b);

struct StyleSimilarity {
  double dl = 0.0;
  double jac = 0.0;
  double ro = 0.0;
  double avg = 0.0;
};

StyleSimilarity avg_pair_similarity(std::string_view a, std::string_view b);

struct ProfileOptions {
  /// Maximum ads per vendor per market; 0 disables the cap.
  std::size_t cap = 200;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// Mean avg-similarity of a vendor's ads between two markets. When the markets are the same,
/// averages over distinct unordered pairs and returns nullopt if fewer than two ads exist.
/// Throws NotFoundError when the vendor has no ads in either market.
std::optional<double> vendor_similarity_profile(const corpus::Corpus& corpus, std::string_view vendor,
                                                std::string_view market_x, std::string_view market_y,
                                                const ProfileOptions& options = {});

struct ProfileRow {
  std::string vendor;
  std::string market_x;
  std::string market_y;
  double mean_avg_similarity = 0.0;
};

/// Within-market profiles for vendors with at least two ads in a market, then cross-market
/// profiles for every market pair a vendor appears in. Sorted by vendor, then markets.
std::vector<ProfileRow> sanity_profiles(const corpus::Corpus& corpus, const ProfileOptions& options = {});

/// Vendors whose ads in some pair of markets have a cross-market profile of exactly 1.0.
std::vector<std::string> flag_identical_vendors(const corpus::Corpus& corpus, const ProfileOptions& options = {});

/// CSV with columns vendor, market_pair, mean_avg_similarity.
std::string sanity_csv(const std::vector<ProfileRow>& rows);

}  // namespace vlink::stylometry
