#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vlink::corpus {

inline constexpr std::string_view kSeparator = "[SEP]";
inline constexpr std::string_view kOthersLabel = "others";

struct Ad {
  std::string id;
  std::string market;
  std::string vendor_raw;
  std::string vendor_norm;
  std::string title;
  std::string description;
  std::string merged_text;
  std::size_t token_count = 0;
};

/// Builds an Ad from raw fields: lowercases the vendor and merges title and description.
Ad make_ad(std::string id, std::string market, std::string vendor, std::string title,
           std::string description);

/// Immutable, ordered collection of ads.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Ad> ads, std::string provenance);

  const std::vector<Ad>& ads() const noexcept { return ads_; }
  const std::set<std::string>& markets() const noexcept { return markets_; }
  const std::string& provenance() const noexcept { return provenance_; }
  std::size_t size() const noexcept { return ads_.size(); }
  bool empty() const noexcept { return ads_.empty(); }
  const Ad& operator[](std::size_t i) const { return ads_[i]; }

  /// Distinct vendor_norm values in first-appearance order.
  std::vector<std::string> vendors() const;
  /// Ad counts keyed by vendor_norm.
  std::map<std::string, std::size_t> vendor_counts() const;
  /// Indices of the ads of `vendor` in `market`.
  std::vector<std::size_t> indices_of(std::string_view vendor, std::string_view market) const;

 private:
  std::vector<Ad> ads_;
  std::set<std::string> markets_;
  std::string provenance_;
};

enum class Format { jsonl, csv };
Format parse_format(std::string_view name);
/// Guesses from the file extension; defaults to JSONL.
Format format_from_path(std::string_view path);

/// Parses records from memory. Records without an "id" field get `id_prefix` + ordinal.
Corpus parse(std::string_view bytes, Format format, std::string_view id_prefix = "ad");
Corpus ingest(const std::string& path, Format format);
/// One JSON object per ad with id, market, vendor (raw), title and description.
std::string to_jsonl(const Corpus& corpus);
/// Concatenates corpora in argument order.
Corpus concat(const std::vector<Corpus>& parts);

/// Drops repeated merged_text within each (market, vendor_norm) group, keeping the first.
Corpus dedupe(const Corpus& corpus);

/// Keeps the first `limit` whitespace tokens of every merged_text.
Corpus truncate(const Corpus& corpus, std::size_t limit = 512);

/// Drops every ad whose vendor_norm is in `vendors`.
Corpus remove_vendors(const Corpus& corpus, const std::vector<std::string>& vendors);

/// Keeps only ads from `market`.
Corpus filter_market(const Corpus& corpus, std::string_view market);

/// Vendor to class-index map. Vendors below min_ads share the trailing "others" class.
class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<std::string> class_vendors, std::size_t min_ads);

  std::size_t n_classes() const noexcept { return class_vendors_.size() + 1; }
  std::size_t others_index() const noexcept { return class_vendors_.size(); }
  std::size_t min_ads() const noexcept { return min_ads_; }
  /// Class of a vendor; unknown vendors route to others.
  std::size_t class_of(std::string_view vendor_norm) const;
  bool contains(std::string_view vendor_norm) const;
  /// Display name of a class index ("others" for the catch-all).
  std::string class_name(std::size_t index) const;
  const std::vector<std::string>& class_vendors() const noexcept { return class_vendors_; }

  std::vector<int> labels(const Corpus& corpus) const;

  nlohmann::json to_json() const;
  static LabelSpace from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> class_vendors_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t min_ads_ = 20;
};

LabelSpace bucket_others(const Corpus& corpus, std::size_t min_ads = 20);

struct SplitSet {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::array<double, 3> ratios{0.75, 0.05, 0.20};
  std::uint64_t seed = 0;
};

/// Stratified split over class labels; deterministic for a fixed seed.
SplitSet split(const std::vector<int>& labels, std::array<double, 3> ratios, std::uint64_t seed,
               std::size_t others_index = static_cast<std::size_t>(-1));

/// Corpus summary: sizes, class count, others bucket and per-market counts.
nlohmann::json manifest(const Corpus& corpus, const LabelSpace& labels);

}  // namespace vlink::corpus
