#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "vlink/corpus.hpp"
#include "vlink/repspace.hpp"

namespace vlink::identify {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Cosine of two vectors; 0 when either is the zero vector.
double cosine(const Vec& u, const Vec& v);

enum class Aggregation {
  mean_pairwise,  // mean cosine over all ordered cross pairs
  centroid        // cosine between mean vectors
};

/// One vendor's per-ad style vectors (rows).
class VendorStyleSet {
 public:
  VendorStyleSet(std::string vendor, Mat vectors);

  const std::string& vendor() const noexcept { return vendor_; }
  const Mat& vectors() const noexcept { return vectors_; }
  std::size_t n_ads() const noexcept { return static_cast<std::size_t>(vectors_.rows()); }
  Eigen::Index dim() const noexcept { return vectors_.cols(); }
  /// Mean of the unit-normalized vectors (zero vectors contribute zero).
  const Vec& unit_mean() const noexcept { return unit_mean_; }
  const Vec& centroid() const noexcept { return centroid_; }

 private:
  std::string vendor_;
  Mat vectors_;
  Vec unit_mean_;
  Vec centroid_;
};

/// Mean of cos(a_i, b_j) over all |A||B| ordered pairs, or centroid cosine.
double pair_similarity(const VendorStyleSet& a, const VendorStyleSet& b,
                       Aggregation agg = Aggregation::mean_pairwise);
/// pair_similarity(A, A), diagonal included.
double self_similarity(const VendorStyleSet& a, Aggregation agg = Aggregation::mean_pairwise);
/// 2 sim(A,B) / (sim_self(A) + sim_self(B)); nullopt when the denominator is not positive.
std::optional<double> normalized_similarity(const VendorStyleSet& a, const VendorStyleSet& b,
                                            Aggregation agg = Aggregation::mean_pairwise);

/// Groups cls style vectors by vendor_norm, in corpus order. Every corpus ad must be present in the tensor.
std::vector<VendorStyleSet> build_style_sets(const corpus::Corpus& corpus, const repspace::EmbeddingTensor& tensor,
                                             const repspace::LayerWeights& weights);

struct SimilarityRecord {
  std::string parent;
  std::string candidate;
  std::size_t n_ads_parent = 0;
  std::size_t n_ads_candidate = 0;
  double sim = 0.0;
  double sim_self_parent = 0.0;
  double sim_self_candidate = 0.0;
  double sim_norm = 0.0;
  double name_sim = 0.0;
  std::size_t rank = 0;
};

/// Scores every unordered vendor pair once so rankings can be assembled without recomputation.
class SimilarityIndex {
 public:
  SimilarityIndex(std::vector<VendorStyleSet> sets, Aggregation agg = Aggregation::mean_pairwise,
                  unsigned workers = 1);

  const std::vector<VendorStyleSet>& sets() const noexcept { return sets_; }
  std::ptrdiff_t find(std::string_view vendor) const;
  double self(std::size_t i) const { return self_[i]; }
  double sim(std::size_t i, std::size_t j) const { return sim_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
  std::optional<double> sim_norm(std::size_t i, std::size_t j) const;
  SimilarityRecord record(std::size_t parent, std::size_t candidate) const;

  /// Candidates by sim_norm descending, ties by vendor name; degenerate pairs are excluded.
  /// Throws NotFoundError for an unknown parent. top_k = 0 returns every candidate.
  std::vector<SimilarityRecord> rank_aliases(std::string_view parent, std::size_t top_k = 0) const;

 private:
  std::vector<VendorStyleSet> sets_;
  std::map<std::string, std::size_t, std::less<>> index_;
  Vec self_;
  Mat sim_;
};

struct Migrant {
  std::string vendor;
  std::vector<std::string> markets;
};

/// Vendors whose vendor_norm appears in two or more markets, sorted by vendor.
std::vector<Migrant> detect_migrants(const corpus::Corpus& corpus);

/// Character trigram cosine of two vendor handles.
double name_similarity(std::string_view a, std::string_view b);

struct NamePair {
  std::string a;
  std::string b;
  double name_sim = 0.0;
  std::optional<double> sim_norm;
};

/// Vendor pairs (a < b) with name_sim >= threshold, annotated with sim_norm when the index has both.
std::vector<NamePair> name_similarity_pairs(const std::vector<std::string>& vendors, double threshold,
                                            const SimilarityIndex* index = nullptr);

struct AliasReport {
  /// Unordered pairs with sim_norm >= threshold; the parent is the vendor with more ads
  /// (ties: lexicographically smaller).
  std::vector<SimilarityRecord> aliases;
  std::vector<Migrant> migrants;
  /// Every parent's full ranked candidate list.
  std::vector<SimilarityRecord> ranked;
};

AliasReport alias_report(const corpus::Corpus& corpus, const SimilarityIndex& index, double sim_norm_threshold = 0.8,
                         std::size_t top_k = 0);

inline constexpr std::string_view kDisclaimer =
    "# Similarity-ranked candidates are investigative leads, not evidence that two accounts share an owner.";

/// Report CSV: disclaimer line, then parent, candidate, n_ads_parent, n_ads_candidate, sim,
/// sim_self_parent, sim_self_candidate, sim_norm, name_sim, rank, markets_parent, markets_candidate.
std::string records_csv(const std::vector<SimilarityRecord>& records, const corpus::Corpus& corpus);
/// parent, candidate, sim_norm.
std::string scatter_csv(const std::vector<SimilarityRecord>& records);
std::string migrants_csv(const std::vector<Migrant>& migrants);
std::string name_pairs_csv(const std::vector<NamePair>& pairs);

nlohmann::json to_json(const SimilarityRecord& r);
SimilarityRecord record_from_json(const nlohmann::json& j);

}  // namespace vlink::identify
