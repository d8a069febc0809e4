#include "vlink/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "vlink/error.hpp"
#include "vlink/util.hpp"

namespace vlink::features {

using nlohmann::json;

void SparseDocMatrix::push_row(const std::vector<std::pair<std::size_t, double>>& entries) {
  for (const auto& [c, v] : entries) {
    if (c >= n_cols) throw DimensionError("column index out of range");
    cols.push_back(c);
    vals.push_back(v);
  }
  row_ptr.push_back(cols.size());
  ++n_rows;
}

SparseDocMatrix SparseDocMatrix::select_rows(std::span<const std::size_t> rows) const {
  SparseDocMatrix out;
  out.n_cols = n_cols;
  for (auto r : rows) {
    if (r >= n_rows) throw DimensionError("row index out of range");
    auto c = row_cols(r);
    auto v = row_vals(r);
    out.cols.insert(out.cols.end(), c.begin(), c.end());
    out.vals.insert(out.vals.end(), v.begin(), v.end());
    out.row_ptr.push_back(out.cols.size());
    ++out.n_rows;
  }
  return out;
}

std::vector<std::string> Vocabulary::extract_terms(std::string_view text) const {
  const std::string cased = config_.case_mode == CaseMode::lower ? util::to_lower_ascii(text) : std::string(text);
  const auto tokens = util::split_whitespace(cased);
  std::vector<std::string> out;
  for (std::size_t n = config_.ngram_min; n <= config_.ngram_max; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string term(tokens[i]);
      for (std::size_t k = 1; k < n; ++k) {
        term.push_back(' ');
        term.append(tokens[i + k]);
      }
      out.push_back(std::move(term));
    }
  }
  return out;
}

Vocabulary Vocabulary::fit(const std::vector<std::string>& texts, const VocabConfig& config) {
  if (texts.empty()) throw ConfigError("cannot fit a vocabulary on an empty corpus");
  if (config.ngram_min < 1 || config.ngram_max < config.ngram_min) throw ConfigError("invalid n-gram range");
  if (config.min_df < 1) throw ConfigError("min_df must be at least 1");
  Vocabulary vocab;
  vocab.config_ = config;
  vocab.n_docs_ = texts.size();
  std::map<std::string, std::size_t> df;
  for (const auto& text : texts) {
    auto terms = vocab.extract_terms(text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[std::move(t)];
  }
  for (auto& [term, count] : df) {
    if (count < config.min_df) continue;
    vocab.terms_.push_back(term);
    vocab.df_.push_back(count);
  }
  vocab.rebuild_index();
  return vocab;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], i);
}

std::ptrdiff_t Vocabulary::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

double Vocabulary::idf(std::size_t column) const {
  return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_.at(column)))) + 1.0;
}

SparseDocMatrix Vocabulary::transform_counts(const std::vector<std::string>& texts) const {
  SparseDocMatrix m;
  m.n_cols = terms_.size();
  for (const auto& text : texts) {
    std::map<std::size_t, double> counts;
    for (const auto& term : extract_terms(text)) {
      auto it = index_.find(term);
      if (it != index_.end()) counts[it->second] += 1.0;
    }
    m.push_row({counts.begin(), counts.end()});
  }
  return m;
}

SparseDocMatrix Vocabulary::transform_tfidf(const std::vector<std::string>& texts) const {
  SparseDocMatrix m = transform_counts(texts);
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    double norm2 = 0.0;
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      m.vals[k] *= idf(m.cols[k]);
      norm2 += m.vals[k] * m.vals[k];
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) m.vals[k] *= inv;
    }
  }
  return m;
}

json Vocabulary::to_json() const {
  return json{{"terms", terms_},
              {"df", df_},
              {"config",
               {{"ngram_min", config_.ngram_min},
                {"ngram_max", config_.ngram_max},
                {"min_df", config_.min_df},
                {"case_mode", config_.case_mode == CaseMode::lower ? "lower" : "preserve"},
                {"n_docs", n_docs_}}}};
}

Vocabulary Vocabulary::from_json(const json& j) {
  Vocabulary v;
  const auto& c = j.at("config");
  v.config_.ngram_min = c.at("ngram_min").get<std::size_t>();
  v.config_.ngram_max = c.at("ngram_max").get<std::size_t>();
  v.config_.min_df = c.at("min_df").get<std::size_t>();
  const auto mode = c.at("case_mode").get<std::string>();
  if (mode != "lower" && mode != "preserve") throw ConfigError("unknown case_mode: " + mode);
  v.config_.case_mode = mode == "lower" ? CaseMode::lower : CaseMode::preserve;
  v.n_docs_ = c.at("n_docs").get<std::size_t>();
  v.terms_ = j.at("terms").get<std::vector<std::string>>();
  v.df_ = j.at("df").get<std::vector<std::size_t>>();
  if (v.terms_.size() != v.df_.size()) throw ConfigError("vocabulary terms/df length mismatch");
  v.rebuild_index();
  return v;
}

namespace {

std::map<std::string, double> gram_counts(std::string_view name, std::size_t n) {
  if (n < 1) throw ConfigError("n-gram size must be at least 1");
  std::u32string padded = U" ";
  padded += util::utf8_decode(name);
  padded += U' ';
  std::map<std::string, double> counts;
  if (padded.size() < n) {
    counts[util::utf8_encode(padded)] = 1.0;
    return counts;
  }
  for (std::size_t i = 0; i + n <= padded.size(); ++i) {
    counts[util::utf8_encode(std::u32string_view(padded).substr(i, n))] += 1.0;
  }
  return counts;
}

GramVector normalized(std::map<std::string, double> weights) {
  double norm2 = 0.0;
  for (const auto& [g, w] : weights) norm2 += w * w;
  GramVector out(weights.begin(), weights.end());
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& [g, w] : out) w *= inv;
  }
  return out;
}

}  // namespace

GramVector char_ngram_vector(std::string_view name, std::size_t n) { return normalized(gram_counts(name, n)); }

double cosine(const GramVector& a, const GramVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, w] : a) na += w * w;
  for (const auto& [g, w] : b) nb += w * w;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const int cmp = a[i].first.compare(b[j].first);
    if (cmp == 0) {
      dot += a[i].second * b[j].second;
      ++i;
      ++j;
    } else if (cmp < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void NameVectorizer::fit(const std::vector<std::string>& names) {
  df_.clear();
  n_docs_ = names.size();
  for (const auto& name : names) {
    for (const auto& [g, c] : gram_counts(name, n_)) ++df_[g];
  }
}

GramVector NameVectorizer::transform(std::string_view name) const {
  auto counts = gram_counts(name, n_);
  for (auto& [g, w] : counts) {
    auto it = df_.find(g);
    const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
    w *= std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + df)) + 1.0;
  }
  return normalized(std::move(counts));
}

}  // namespace vlink::features
