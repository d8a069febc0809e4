#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include "test_support.hpp"
#include "vlink/error.hpp"
#include "vlink/identify.hpp"
#include "vlink/repspace.hpp"
#include "vlink/synth.hpp"
#include "vlink/util.hpp"

using namespace vlink;

TEST_CASE("style corpus shape and small vendors") {
  synth::StyleCorpusConfig c;
  c.n_vendors = 10;
  c.ads_per_vendor = 25;
  c.small_fraction = 0.2;
  c.small_ads = 6;
  const auto corpus = synth::style_corpus(c);
  CHECK(corpus.size() == 8 * 25 + 2 * 6);
  CHECK(corpus.markets() == std::set<std::string>{"alpha"});
  const auto small = synth::small_vendors(c);
  CHECK(small.size() == 2);
  for (const auto& v : small) CHECK(corpus.vendor_counts().at(v) == 6);
  CHECK(corpus::to_jsonl(synth::style_corpus(c)) == corpus::to_jsonl(corpus));
  c.seed += 1;
  CHECK(corpus::to_jsonl(synth::style_corpus(c)) != corpus::to_jsonl(corpus));
  c.n_vendors = 0;
  CHECK_THROWS_AS(synth::style_corpus(c), ConfigError);
}

TEST_CASE("market corpus planted facts") {
  const auto fx = synth::market_corpus({});
  CHECK(fx.corpus.markets() == std::set<std::string>{"alpha", "beta", "gamma"});
  std::vector<std::string> migrants;
  for (const auto& m : identify::detect_migrants(fx.corpus)) migrants.push_back(m.vendor);
  CHECK(migrants == fx.planted.migrants);
  CHECK(fx.entity_of.at("houseofdank") == fx.entity_of.at("houseofdank2.0"));
  CHECK(fx.entity_of.at("fence") == fx.entity_of.at("tinsel"));
  CHECK(fx.entity_of.at("europills") != fx.entity_of.at("europills2"));
  CHECK(fx.entity_of.at("bluelotus") == fx.entity_of.at("bluelotus_shop"));
  CHECK(fx.copied_from.size() == 27);
  for (const auto& [clone, src] : fx.copied_from) {
    const auto& a = fx.corpus[static_cast<std::size_t>(std::stoul(clone.substr(clone.find('-') + 1)))];
    const auto& b = fx.corpus[static_cast<std::size_t>(std::stoul(src.substr(src.find('-') + 1)))];
    CHECK(a.id == clone);
    CHECK(b.id == src);
    CHECK(a.merged_text == b.merged_text);
  }
  synth::MarketCorpusConfig two;
  two.markets = {"a", "b"};
  CHECK_THROWS_AS(synth::market_corpus(two), ConfigError);
}

TEST_CASE("cls tensors share leading layers") {
  const auto fx = synth::market_corpus({});
  const auto [before, after] = synth::cls_tensors(fx, {});
  CHECK(before.n_ads() == fx.corpus.size());
  CHECK(after.n_layers() == 13);
  for (std::size_t l = 0; l < 9; ++l) CHECK(before.layer_matrix(l) == after.layer_matrix(l));
  CHECK(before.layer_matrix(12) != after.layer_matrix(12));
  const auto& [parent, clone] = fx.planted.clone;
  const auto c = fx.corpus.indices_of(clone, "gamma");
  const auto p = fx.corpus.indices_of(parent, "alpha");
  REQUIRE(c.size() == p.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::equal(after.vector(c[i], 12).begin(), after.vector(c[i], 12).end(), after.vector(p[i], 12).begin()));
  }
}

TEST_CASE("target fixture") {
  synth::TargetConfig tc;
  tc.ads_per_vendor = 4;
  tc.n_new = 3;
  const auto fx = synth::target_fixture({"k1", "k2"}, tc);
  CHECK(fx.unseen.size() == 3);
  CHECK(fx.corpus.size() == 20);
  CHECK(fx.tokens.n_ads() == 20);
  for (std::size_t i = 0; i < fx.corpus.size(); ++i) {
    CHECK(fx.tokens.ad_ids()[i] == fx.corpus[i].id);
    CHECK(fx.tokens.positions(i) == std::min<std::size_t>(fx.corpus[i].token_count, tc.max_positions));
  }
  for (const auto& u : fx.unseen) CHECK(u.ends_with("_new"));
}

TEST_CASE("fixtures on disk") {
  const auto dir = test::scratch_dir("synth_fixtures");
  const auto manifest = synth::write_fixtures(dir, 42);
  for (const auto& [key, name] : manifest["files"].items()) {
    CHECK(std::filesystem::exists(std::filesystem::path(dir) / name.get<std::string>()));
  }
  CHECK(manifest["planted"]["identical"] == "cyanspore");
  const auto target = repspace::load_embeddings(dir + "/target_tokens.vlemb");
  CHECK(target.mode() == repspace::Mode::token);
  const auto first = util::read_file(dir + "/cls_after.vlemb");
  const auto again = test::scratch_dir("synth_fixtures_again");
  synth::write_fixtures(again, 42);
  CHECK(util::read_file(again + "/cls_after.vlemb") == first);
  CHECK(util::read_file(again + "/manifest.json") == util::read_file(dir + "/manifest.json"));
}
