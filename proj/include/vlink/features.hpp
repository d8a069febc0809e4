#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace vlink::features {

/// Compressed sparse rows; column indices ascending within each row.
struct SparseDocMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {vals.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
  std::size_t nnz() const noexcept { return vals.size(); }

  /// Appends a row; entries must have strictly ascending column indices.
  void push_row(const std::vector<std::pair<std::size_t, double>>& entries);
  /// Rows at the given indices, in that order.
  SparseDocMatrix select_rows(std::span<const std::size_t> rows) const;
};

enum class CaseMode { preserve, lower };

struct VocabConfig {
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 2;
  std::size_t min_df = 2;
  CaseMode case_mode = CaseMode::preserve;
};

/// Word n-gram vocabulary with document frequencies for smoothed IDF.
class Vocabulary {
 public:
  static Vocabulary fit(const std::vector<std::string>& texts, const VocabConfig& config = {});

  const VocabConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::size_t>& df() const noexcept { return df_; }
  std::size_t n_docs() const noexcept { return n_docs_; }
  std::size_t size() const noexcept { return terms_.size(); }
  /// Column of a term, or -1.
  std::ptrdiff_t index_of(std::string_view term) const;
  /// ln((1 + N) / (1 + df)) + 1
  double idf(std::size_t column) const;

  /// n-gram terms of a text under this vocabulary's case mode and n-gram range.
  std::vector<std::string> extract_terms(std::string_view text) const;

  /// Raw term counts; out-of-vocabulary terms are ignored.
  SparseDocMatrix transform_counts(const std::vector<std::string>& texts) const;
  /// tf * idf with L2-normalized rows.
  SparseDocMatrix transform_tfidf(const std::vector<std::string>& texts) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  VocabConfig config_;
  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::size_t> index_;

  void rebuild_index();
};

/// Sparse vector keyed by gram, sorted by key.
using GramVector = std::vector<std::pair<std::string, double>>;

/// L2-normalized character n-gram vector of a name padded with one space on each side.
/// Weights are raw counts; NameVectorizer applies IDF.
GramVector char_ngram_vector(std::string_view name, std::size_t n = 3);

double cosine(const GramVector& a, const GramVector& b);

/// Character n-gram TF-IDF fitted over a set of names.
class NameVectorizer {
 public:
  explicit NameVectorizer(std::size_t n = 3) : n_(n) {}
  void fit(const std::vector<std::string>& names);
  GramVector transform(std::string_view name) const;
  std::size_t n() const noexcept { return n_; }

 private:
  std::size_t n_;
  std::size_t n_docs_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

}  // namespace vlink::features
