#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vlink/corpus.hpp"
#include "vlink/error.hpp"
#include "vlink/util.hpp"

using namespace vlink;
using corpus::Corpus;
using test::ad;

namespace {

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

Corpus vendor_counts_corpus(const std::vector<std::pair<std::string, std::size_t>>& counts) {
  std::vector<corpus::Ad> ads;
  for (const auto& [v, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) ads.push_back(ad(v + std::to_string(i), "m", v, "t" + std::to_string(i), "d"));
  }
  return Corpus(std::move(ads), "test");
}

}  // namespace

TEST_CASE("make_ad merges title and description and normalizes the vendor") {
  const auto a = ad("1", "alpha", "AgentQ", "t", "d");
  CHECK(a.vendor_norm == "agentq");
  CHECK(a.vendor_raw == "AgentQ");
  CHECK(a.merged_text == "t [SEP] d");
  CHECK(a.token_count == 3);
}

TEST_CASE("jsonl ingestion") {
  const std::string bytes =
      R"({"market":"alpha","vendor":"AgentQ","title":"t","description":"d"})"
      "\n\n"
      R"({"id":"x9","market":"beta","vendor":"agentq","title":"u","description":"e"})"
      "\n";
  const auto c = corpus::parse(bytes, corpus::Format::jsonl, "src");
  REQUIRE(c.size() == 2);
  CHECK(c[0].id == "src:0");
  CHECK(c[1].id == "x9");
  CHECK(c[0].merged_text == "t [SEP] d");
  CHECK(c.markets() == std::set<std::string>{"alpha", "beta"});
  CHECK(c.vendors() == std::vector<std::string>{"agentq"});
  CHECK(c.vendor_counts().at("agentq") == 2);
}

TEST_CASE("empty input yields an empty corpus") {
  CHECK(corpus::parse("", corpus::Format::jsonl).empty());
  CHECK(corpus::parse("\n\n", corpus::Format::jsonl).empty());
}

TEST_CASE("missing field reports the line number") {
  const std::string bytes =
      R"({"market":"a","vendor":"v","title":"t","description":"d"})"
      "\n"
      R"({"market":"a","vendor":"v","title":"t"})"
      "\n";
  try {
    corpus::parse(bytes, corpus::Format::jsonl);
    FAIL("expected RecordError");
  } catch (const RecordError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(corpus::parse("not json\n", corpus::Format::jsonl), RecordError);
  CHECK_THROWS_AS(corpus::parse(R"({"market":[1],"vendor":"v","title":"t","description":"d"})", corpus::Format::jsonl),
                  RecordError);
}

TEST_CASE("csv ingestion with quoting") {
  const std::string bytes =
      "market,vendor,title,description\n"
      "alpha,AgentQ,\"hello, world\",\"multi\nline \"\"quoted\"\"\"\n"
      "beta,bob,t,d\n";
  const auto c = corpus::parse(bytes, corpus::Format::csv, "f");
  REQUIRE(c.size() == 2);
  CHECK(c[0].title == "hello, world");
  CHECK(c[0].description == "multi\nline \"quoted\"");
  CHECK(c[0].vendor_norm == "agentq");
  CHECK(c[1].market == "beta");
  CHECK_THROWS_AS(corpus::parse("market,vendor,title\na,b,c\n", corpus::Format::csv), RecordError);
  CHECK_THROWS_AS(corpus::parse("market,vendor,title,description\na,b,c\n", corpus::Format::csv), RecordError);
  CHECK(corpus::parse("", corpus::Format::csv).empty());
}

TEST_CASE("duplicate ids are rejected") {
  const std::string bytes =
      R"({"id":"a","market":"m","vendor":"v","title":"t","description":"d"})"
      "\n"
      R"({"id":"a","market":"m","vendor":"v","title":"u","description":"d"})"
      "\n";
  CHECK_THROWS_AS(corpus::parse(bytes, corpus::Format::jsonl), ConfigError);
}

TEST_CASE("ingest from disk and format detection") {
  const auto dir = test::scratch_dir("corpus_ingest");
  util::write_file(dir + "/m.jsonl", R"({"market":"m","vendor":"V","title":"t","description":"d"})" "\n");
  const auto c = corpus::ingest(dir + "/m.jsonl", corpus::Format::jsonl);
  REQUIRE(c.size() == 1);
  CHECK(c[0].id == "m:0");
  CHECK(!c.provenance().empty());
  util::write_file(dir + "/empty.jsonl", "");
  CHECK(corpus::ingest(dir + "/empty.jsonl", corpus::Format::jsonl).empty());
  CHECK_THROWS_AS(corpus::ingest(dir + "/missing.jsonl", corpus::Format::jsonl), NotFoundError);
  CHECK(corpus::format_from_path("x.csv") == corpus::Format::csv);
  CHECK(corpus::format_from_path("x.jsonl") == corpus::Format::jsonl);
  CHECK(corpus::parse_format("csv") == corpus::Format::csv);
  CHECK_THROWS_AS(corpus::parse_format("xml"), ConfigError);
}

TEST_CASE("to_jsonl round-trips through parse") {
  const Corpus c({ad("a1", "m", "AgentQ", "t \"q\"", "d"), ad("a2", "n", "bob", "x", "y\nz")}, "p");
  const auto back = corpus::parse(corpus::to_jsonl(c), corpus::Format::jsonl);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == c[i].id);
    CHECK(back[i].vendor_raw == c[i].vendor_raw);
    CHECK(back[i].merged_text == c[i].merged_text);
  }
}

TEST_CASE("dedupe") {
  SUBCASE("three records with two identical keep two") {
    const Corpus c({ad("1", "m", "v", "x", "d"), ad("2", "m", "v", "x", "d"), ad("3", "m", "v", "y", "d")}, "p");
    const auto d = corpus::dedupe(c);
    REQUIRE(d.size() == 2);
    CHECK(d[0].id == "1");
    CHECK(d[1].id == "3");
  }
  SUBCASE("duplicates across vendors are kept") {
    const Corpus c({ad("1", "m", "v", "x", "d"), ad("2", "m", "w", "x", "d")}, "p");
    CHECK(corpus::dedupe(c).size() == 2);
  }
  SUBCASE("case variants of a vendor are merged") {
    const Corpus c({ad("1", "m", "AgentQ", "x", "d"), ad("2", "m", "agentq", "x", "d")}, "p");
    CHECK(corpus::dedupe(c).size() == 1);
  }
  SUBCASE("no duplicates is identity and dedupe is idempotent") {
    const Corpus c({ad("1", "m", "v", "x", "d"), ad("2", "m", "v", "y", "d"), ad("3", "m", "v", "y", "d")}, "p");
    const auto once = corpus::dedupe(c);
    const auto twice = corpus::dedupe(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].id == twice[i].id);
  }
}

TEST_CASE("truncate") {
  const Corpus c({ad("1", "m", "v", words(300), words(299)), ad("2", "m", "v", "a b", "c")}, "p");
  REQUIRE(c[0].token_count == 600);
  const auto t = corpus::truncate(c, 512);
  CHECK(t[0].token_count == 512);
  CHECK(util::split_whitespace(t[0].merged_text).size() == 512);
  CHECK(t[1].merged_text == c[1].merged_text);

  const Corpus five({ad("1", "m", "v", "a b", "c d e")}, "p");
  const auto raw = corpus::truncate(Corpus({[] {
                                      auto a = ad("1", "m", "v", "", "");
                                      a.merged_text = "a b c d e";
                                      return a;
                                    }()},
                                           "p"),
                                    3);
  CHECK(raw[0].merged_text == "a b c");
  CHECK(corpus::truncate(five, 3)[0].merged_text == "a b [SEP]");
  CHECK_THROWS_AS(corpus::truncate(c, 0), ConfigError);
}

TEST_CASE("bucket_others") {
  const auto c = vendor_counts_corpus({{"a", 25}, {"b", 19}, {"c", 20}});
  const auto ls = corpus::bucket_others(c, 20);
  CHECK(ls.n_classes() == 3);
  CHECK(ls.class_vendors() == std::vector<std::string>{"a", "c"});
  CHECK(ls.class_of("a") == 0);
  CHECK(ls.class_of("c") == 1);
  CHECK(ls.class_of("b") == ls.others_index());
  CHECK(ls.class_of("never-seen") == ls.others_index());
  CHECK(ls.class_name(ls.others_index()) == "others");

  const auto all = corpus::bucket_others(c, 1);
  CHECK(all.n_classes() == 4);
  CHECK(all.others_index() == 3);

  const auto none = corpus::bucket_others(c, 100);
  CHECK(none.n_classes() == 1);
  CHECK(none.others_index() == 0);

  CHECK_THROWS_AS(corpus::bucket_others(c, 0), ConfigError);

  const auto labels = ls.labels(c);
  std::vector<std::size_t> per_class(ls.n_classes());
  for (int l : labels) per_class[l]++;
  for (std::size_t k = 0; k + 1 < ls.n_classes(); ++k) CHECK(per_class[k] >= 20);

  const auto back = corpus::LabelSpace::from_json(ls.to_json());
  CHECK(back.class_vendors() == ls.class_vendors());
  CHECK(back.min_ads() == 20);
}

TEST_CASE("split") {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i % 4;

  SUBCASE("sizes follow the ratios") {
    const auto s = corpus::split(labels, {0.75, 0.05, 0.20}, 3);
    CHECK(std::abs(static_cast<int>(s.train.size()) - 75) <= 1);
    CHECK(std::abs(static_cast<int>(s.val.size()) - 5) <= 1);
    CHECK(std::abs(static_cast<int>(s.test.size()) - 20) <= 1);
  }
  SUBCASE("partition") {
    const auto s = corpus::split(labels, {0.75, 0.05, 0.20}, 3);
    std::vector<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      CHECK(std::is_sorted(part->begin(), part->end()));
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(100);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
  }
  SUBCASE("degenerate ratios") {
    const auto s = corpus::split(labels, {1.0, 0.0, 0.0}, 3);
    CHECK(s.train.size() == 100);
    CHECK(s.val.empty());
    CHECK(s.test.empty());
  }
  SUBCASE("determinism") {
    const auto a = corpus::split(labels, {0.75, 0.05, 0.20}, 8);
    const auto b = corpus::split(labels, {0.75, 0.05, 0.20}, 8);
    const auto c = corpus::split(labels, {0.75, 0.05, 0.20}, 9);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK((a.train != c.train || a.test != c.test));
  }
  SUBCASE("small classes still reach train") {
    std::vector<int> lab(40, 0);
    lab[37] = lab[38] = lab[39] = 1;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = corpus::split(lab, {0.1, 0.1, 0.8}, seed);
      CHECK(std::any_of(s.train.begin(), s.train.end(), [&](std::size_t i) { return lab[i] == 1; }));
    }
  }
  SUBCASE("malformed ratios") {
    CHECK_THROWS_AS(corpus::split(labels, {0.5, 0.2, 0.2}, 1), ConfigError);
    CHECK_THROWS_AS(corpus::split(labels, {1.2, -0.1, -0.1}, 1), ConfigError);
  }
}

TEST_CASE("filters and manifest") {
  const Corpus c({ad("1", "alpha", "A", "x", "d"), ad("2", "beta", "a", "y", "d"), ad("3", "beta", "b", "z", "d")},
                 "prov");
  CHECK(corpus::filter_market(c, "beta").size() == 2);
  CHECK(corpus::remove_vendors(c, {"a"}).size() == 1);
  CHECK(c.indices_of("a", "beta") == std::vector<std::size_t>{1});
  const Corpus extra({ad("4", "gamma", "c", "w", "d")}, "other");
  CHECK(corpus::concat({c, extra}).size() == 4);
  CHECK_THROWS_AS(corpus::concat({c, corpus::filter_market(c, "alpha")}), ConfigError);

  const auto ls = corpus::bucket_others(c, 2);
  const auto m = corpus::manifest(c, ls);
  CHECK(m["n_ads"] == 3);
  CHECK(m["n_vendors"] == 2);
  CHECK(m["n_classes"] == 2);
  CHECK(m["others_count"] == 1);
  CHECK(m["per_market"]["beta"] == 2);
  CHECK(m["provenance"] == "prov");
}
