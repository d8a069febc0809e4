#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "vlink/error.hpp"
#include "vlink/features.hpp"

using namespace vlink;
using namespace vlink::features;

namespace {

double row_norm(const SparseDocMatrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row_vals(r)) s += v * v;
  return std::sqrt(s);
}

double value_at(const SparseDocMatrix& m, std::size_t r, std::size_t c) {
  const auto cols = m.row_cols(r);
  const auto vals = m.row_vals(r);
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] == c) return vals[k];
  }
  return 0.0;
}

}  // namespace

TEST_CASE("vocabulary enumerates unigrams and bigrams lexicographically") {
  const auto v = Vocabulary::fit({"a b", "b c"}, {1, 2, 1, CaseMode::preserve});
  CHECK(v.terms() == std::vector<std::string>{"a", "a b", "b", "b c", "c"});
  CHECK(v.df()[v.index_of("b")] == 2);
  CHECK(v.index_of("zzz") == -1);

  const auto v2 = Vocabulary::fit({"a b", "b c"}, {1, 2, 2, CaseMode::preserve});
  CHECK(v2.terms() == std::vector<std::string>{"b"});
}

TEST_CASE("case handling") {
  const auto keep = Vocabulary::fit({"A a"}, {1, 1, 1, CaseMode::preserve});
  CHECK(keep.size() == 2);
  const auto low = Vocabulary::fit({"A a"}, {1, 1, 1, CaseMode::lower});
  CHECK(low.terms() == std::vector<std::string>{"a"});
}

TEST_CASE("vocabulary errors") {
  CHECK_THROWS_AS(Vocabulary::fit({}), ConfigError);
  CHECK_THROWS_AS(Vocabulary::fit({"a"}, {2, 1, 1, CaseMode::preserve}), ConfigError);
  CHECK_THROWS_AS(Vocabulary::fit({"a"}, {1, 1, 0, CaseMode::preserve}), ConfigError);
}

TEST_CASE("tf-idf matches the smoothed-idf hand computation") {
  const auto v = Vocabulary::fit({"a", "a b"}, {1, 1, 1, CaseMode::preserve});
  const auto a = static_cast<std::size_t>(v.index_of("a"));
  const auto b = static_cast<std::size_t>(v.index_of("b"));
  CHECK(v.idf(a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(v.idf(b) - 1.4054651081081644) < 1e-12);
  const auto m = v.transform_tfidf({"a", "a b"});
  CHECK(std::abs(value_at(m, 1, a) - 0.5797386715376657) < 1e-12);
  CHECK(std::abs(value_at(m, 1, b) - 0.8148024746671689) < 1e-12);
  CHECK(std::abs(row_norm(m, 0) - 1.0) < 1e-9);
  CHECK(std::abs(row_norm(m, 1) - 1.0) < 1e-9);
}

TEST_CASE("out-of-vocabulary documents give zero rows") {
  const auto v = Vocabulary::fit({"a", "a b"}, {1, 1, 1, CaseMode::preserve});
  const auto m = v.transform_tfidf({"zzz qqq", ""});
  CHECK(m.n_rows == 2);
  CHECK(m.nnz() == 0);
}

TEST_CASE("transform properties") {
  const std::vector<std::string> docs = {"x y z x", "y y w", "z w x y"};
  const auto v = Vocabulary::fit(docs, {1, 2, 1, CaseMode::preserve});
  const auto m1 = v.transform_tfidf(docs);
  const auto m2 = v.transform_tfidf(docs);
  CHECK(m1.cols == m2.cols);
  CHECK(m1.vals == m2.vals);
  for (std::size_t c : m1.cols) CHECK(c < v.size());
  for (std::size_t r = 0; r < m1.n_rows; ++r) {
    const auto cols = m1.row_cols(r);
    for (std::size_t k = 1; k < cols.size(); ++k) CHECK(cols[k - 1] < cols[k]);
  }

  const auto counts = v.transform_counts({"x y", "x y x y x y"});
  CHECK(value_at(counts, 1, static_cast<std::size_t>(v.index_of("x"))) == 3.0);
  const auto scaled = v.transform_tfidf({"x y", "x y x y x y"});
  for (std::size_t c = 0; c < v.size(); ++c) {
    CHECK(std::abs(value_at(scaled, 0, c) - value_at(scaled, 1, c)) < 1e-12);
  }
}

TEST_CASE("vocabulary json round-trip reproduces transforms") {
  const std::vector<std::string> docs = {"Buy NOW fast", "buy now", "fast ship now"};
  const auto v = Vocabulary::fit(docs, {1, 2, 1, CaseMode::preserve});
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.terms() == v.terms());
  CHECK(back.n_docs() == v.n_docs());
  const auto a = v.transform_tfidf(docs);
  const auto b = back.transform_tfidf(docs);
  CHECK(a.cols == b.cols);
  CHECK(a.vals == b.vals);
}

TEST_CASE("sparse matrix row selection") {
  SparseDocMatrix m;
  m.n_cols = 4;
  m.push_row({{0, 1.0}, {3, 2.0}});
  m.push_row({});
  m.push_row({{1, 5.0}});
  CHECK(m.n_rows == 3);
  const std::vector<std::size_t> rows = {2, 0};
  const auto s = m.select_rows(rows);
  CHECK(s.n_rows == 2);
  CHECK(value_at(s, 0, 1) == 5.0);
  CHECK(value_at(s, 1, 3) == 2.0);
  CHECK_THROWS_AS(m.push_row({{9, 1.0}}), DimensionError);
}

TEST_CASE("character n-gram vectors") {
  CHECK(cosine(char_ngram_vector("agentq"), char_ngram_vector("agentq")) == doctest::Approx(1.0));
  CHECK(std::abs(cosine(char_ngram_vector("houseofdank"), char_ngram_vector("houseofdank2.0")) - 0.8058229640253802) <
        1e-12);
  CHECK(std::abs(cosine(char_ngram_vector("europills"), char_ngram_vector("europills2")) - 0.8432740427115678) <
        1e-12);
  CHECK(cosine(char_ngram_vector("fence"), char_ngram_vector("tinsel")) == 0.0);
  const auto tiny = char_ngram_vector("", 3);
  REQUIRE(tiny.size() == 1);
  CHECK(tiny[0].first == "  ");
  CHECK(char_ngram_vector("a", 5).size() == 1);
  CHECK_THROWS_AS(char_ngram_vector("abc", 0), ConfigError);
}

TEST_CASE("name vectorizer applies idf") {
  NameVectorizer nv;
  nv.fit({"houseofdank", "houseofdank2.0", "fence", "tinsel"});
  const auto a = nv.transform("houseofdank");
  double n2 = 0.0;
  for (const auto& [g, w] : a) n2 += w * w;
  CHECK(std::abs(n2 - 1.0) < 1e-12);
  CHECK(cosine(a, nv.transform("houseofdank2.0")) > 0.7);
  CHECK(cosine(nv.transform("fence"), nv.transform("tinsel")) <= 0.2);
}
