#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vlink/corpus.hpp"
#include "vlink/repspace.hpp"

namespace vlink::synth {

// Seeded fixtures with planted structure for tests and demos.

/// Single-market corpus of stylistically distinct vendors.
struct StyleCorpusConfig {
  std::uint64_t seed = 7;
  std::size_t n_vendors = 30;
  std::size_t ads_per_vendor = 50;
  /// Share of vendors generated below the others threshold.
  double small_fraction = 0.1;
  std::size_t small_ads = 10;
  std::string market = "alpha";
};

corpus::Corpus style_corpus(const StyleCorpusConfig& config);
/// Vendors the style corpus generates with `small_ads` ads.
std::vector<std::string> small_vendors(const StyleCorpusConfig& config);

struct MarketCorpusConfig {
  std::uint64_t seed = 11;
  std::vector<std::string> markets = {"alpha", "beta", "gamma"};
  std::size_t vendors_per_market = 8;
  std::size_t min_ads = 22;
  std::size_t max_ads = 34;
  std::size_t small_per_market = 1;
  std::size_t small_ads = 8;
};

struct Planted {
  std::vector<std::string> migrants;
  std::string identical;
  /// (parent, alias) pairs sharing one author.
  std::vector<std::pair<std::string, std::string>> aliases;
  /// Similar handles, different authors.
  std::vector<std::pair<std::string, std::string>> copycats;
  /// (parent, clone) where the clone copies the parent's ads and representations.
  std::pair<std::string, std::string> clone;

  nlohmann::json to_json() const;
};

struct MarketFixture {
  corpus::Corpus corpus;
  Planted planted;
  /// Author index of every vendor_norm.
  std::map<std::string, std::size_t> entity_of;
  /// For cloned ads, the id of the copied ad.
  std::map<std::string, std::string> copied_from;
};

/// Multi-market corpus with planted migrants, an identical cross-market vendor, aliases,
/// copycats and a clone. Requires at least three markets.
MarketFixture market_corpus(const MarketCorpusConfig& config);

struct ClsTensorConfig {
  std::uint64_t seed = 13;
  std::size_t n_layers = 13;
  std::size_t dim = 48;
  /// Trailing layers that differ between the before and after tensors.
  std::size_t changed_layers = 4;
  double author_scale = 2.0;
  double common_scale = 1.0;
  double noise = 0.15;
};

/// Before/after cls tensors over the fixture's ads: identical in the leading layers, author
/// structure in the trailing `changed_layers` of the after tensor.
std::pair<repspace::EmbeddingTensor, repspace::EmbeddingTensor> cls_tensors(const MarketFixture& fixture,
                                                                            const ClsTensorConfig& config);

struct TargetConfig {
  std::uint64_t seed = 17;
  std::string market = "delta";
  std::size_t n_new = 5;
  std::size_t ads_per_vendor = 30;
  std::size_t n_layers = 13;
  std::size_t dim = 16;
  std::size_t max_positions = 12;
  /// Norm of the per-vendor offset added to every token of the deepest layer.
  double signal = 4.0;
};

struct TargetFixture {
  corpus::Corpus corpus;
  std::vector<std::string> known;
  std::vector<std::string> unseen;
  /// Vendor signal exists only in the last layer; ad text is vendor-agnostic.
  repspace::EmbeddingTensor tokens;
};

TargetFixture target_fixture(const std::vector<std::string>& known_vendors, const TargetConfig& config);

/// Writes every fixture under `dir` and returns a manifest of file names and planted facts.
nlohmann::json write_fixtures(const std::string& dir, std::uint64_t seed);

}  // namespace vlink::synth
