#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "cka_oracle.hpp"
#include "tensor_fixtures.hpp"
#include "test_support.hpp"
#include "vlink/error.hpp"
#include "vlink/repspace.hpp"

using namespace vlink;
using namespace vlink::repspace;

namespace {

std::size_t offset_of(const std::string& bytes) {
  try {
    deserialize(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected FormatError");
  return 0;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  util::Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
  const auto t = test::random_cls(2, 3, 4, 1);
  CHECK(t.values().size() == 24);
  CHECK(serialize(t).size() >= 96);
  CHECK(t.find("ad1") == 1);
  CHECK(t.find("nope") == -1);
  CHECK(t.vector(1, 2).size() == 4);
  CHECK(t.vector(1, 2)[0] == t.values()[1 * 12 + 2 * 4]);

  const auto tok = test::random_tokens({2, 0, 3}, 2, 3, 2);
  CHECK(tok.positions(0) == 2);
  CHECK(tok.positions(1) == 0);
  CHECK(tok.vector(2, 1, 2)[0] == tok.values()[(2 + 0) * 6 + 2 * 6 + 1 * 3]);

  CHECK_THROWS_AS(EmbeddingTensor(Mode::cls, 2, 2, {"a"}, {}, std::vector<float>(3), "t"), DimensionError);
  CHECK_THROWS_AS(EmbeddingTensor(Mode::cls, 1, 1, {"a", "a"}, {}, std::vector<float>(2), "t"), DimensionError);
  CHECK_THROWS_AS(EmbeddingTensor(Mode::cls, 1, 1, {"a"}, {1}, std::vector<float>(1), "t"), DimensionError);
}

TEST_CASE("VLEMB1 round-trips bit-identically") {
  const auto dir = test::scratch_dir("vlemb");
  for (const auto& t : {test::random_cls(5, 3, 4, 3), test::random_tokens({3, 1, 4}, 2, 5, 4),
                        EmbeddingTensor(Mode::cls, 2, 3, {}, {}, {}, "empty")}) {
    const auto bytes = serialize(t);
    CHECK(bytes.substr(0, 8) == std::string("VLEMB1\0\0", 8));
    const auto back = deserialize(bytes);
    CHECK(back == t);
    CHECK(serialize(back) == bytes);
    save_embeddings(t, dir + "/t.vlemb");
    CHECK(load_embeddings(dir + "/t.vlemb") == t);
  }
  CHECK(deserialize(serialize(EmbeddingTensor(Mode::cls, 2, 3, {}, {}, {}, "empty"))).n_ads() == 0);
}

TEST_CASE("VLEMB1 header arithmetic") {
  const nlohmann::json h = {{"version", 1},  {"mode", "cls"},         {"n_ads", 2},          {"n_layers", 3},
                            {"dim", 4},      {"ad_ids", {"a", "b"}}, {"checkpoint_tag", "x"}};
  const auto text = h.dump();
  std::string bytes("VLEMB1\0\0", 8);
  util::put_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  for (int i = 0; i < 24; ++i) util::put_f32_le(bytes, static_cast<float>(i));
  const auto t = deserialize(bytes);
  CHECK(t.n_ads() == 2);
  CHECK(t.n_layers() == 3);
  CHECK(t.dim() == 4);
  CHECK(t.vector(1, 2)[3] == 23.0f);
  CHECK(offset_of(bytes.substr(0, bytes.size() - 4)) == bytes.size() - 4);
}

TEST_CASE("VLEMB1 corruption") {
  const auto bytes = serialize(test::random_cls(3, 2, 2, 5));
  CHECK(offset_of("VLEMB2\0\0" + bytes.substr(8)) == 0);
  CHECK(offset_of(bytes + "abcd") == bytes.size());
  CHECK(offset_of(bytes.substr(0, 9)) == 9);
  auto nan = bytes;
  const std::size_t pos = nan.size() - 8;
  nan.replace(pos, 4, std::string("\x00\x00\xc0\x7f", 4));
  CHECK(offset_of(nan) == pos);
  auto bad = bytes;
  bad[13] = '#';
  CHECK(offset_of(bad) >= 12);
  CHECK_THROWS_AS(load_embeddings("/nonexistent/x.vlemb"), NotFoundError);
}

TEST_CASE("linear CKA properties") {
  const Mat x = random_mat(30, 6, 1), y = random_mat(30, 4, 2);
  CHECK(std::abs(linear_cka(x, x) - 1.0) < 1e-9);
  CHECK(std::abs(linear_cka(x, y) - linear_cka(y, x)) < 1e-12);
  CHECK(std::abs(linear_cka(3.5 * x, -0.2 * y) - linear_cka(x, y)) < 1e-9);
  const Eigen::HouseholderQR<Mat> qr(random_mat(6, 6, 3));
  const Mat q = qr.householderQ();
  CHECK(std::abs(linear_cka(x, x * q) - 1.0) < 1e-6);
  CHECK(std::abs(linear_cka(x * q, y) - linear_cka(x, y)) < 1e-9);
  Mat shifted = y;
  shifted.col(1).array() += 7.0;
  CHECK(std::abs(linear_cka(x, shifted) - linear_cka(x, y)) < 1e-9);
  CHECK(std::abs(linear_cka(x, y) - oracle::cka_hsic(x, y)) < 1e-9);
  CHECK(linear_cka(x, Mat::Constant(30, 2, 4.0)) == 0.0);
  CHECK_THROWS_AS(linear_cka(x, random_mat(10, 2, 4)), DimensionError);
}

TEST_CASE("4x2 hand case") {
  Mat x(4, 2), y(4, 2);
  x << 1, 2, 3, 1, 0, -1, 2, 5;
  y << 0.5, 1, -1, 2, 3, 0, 1, 1;
  CHECK(std::abs(linear_cka(x, y) - 0.30428846354738703) < 1e-9);
}

TEST_CASE("cka profile") {
  const auto before = test::random_cls(40, 12, 5, 7);
  const auto same = cka_profile(before, before);
  REQUIRE(same.distance.size() == 12);
  for (double d : same.distance) CHECK(std::abs(d) < 1e-12);

  auto vals = before.values();
  util::Rng rng(9);
  for (std::size_t a = 0; a < 40; ++a) {
    for (std::size_t d = 0; d < 5; ++d) vals[a * 60 + 11 * 5 + d] = static_cast<float>(rng.normal());
  }
  const EmbeddingTensor after(Mode::cls, 12, 5, before.ad_ids(), {}, vals, "after");
  const auto prof = cka_profile(before, after);
  for (std::size_t l = 0; l < 11; ++l) CHECK(prof.distance[11] > prof.distance[l]);
  for (std::size_t l = 0; l < 12; ++l) CHECK(prof.distance[l] == 1.0 - prof.similarity[l]);
  const auto sub = cka_profile(before, after, 20, 3);
  CHECK(sub.distance == cka_profile(before, after, 20, 3).distance);

  const auto other = test::random_cls(40, 12, 5, 8);
  const EmbeddingTensor renamed(Mode::cls, 12, 5, test::ids(40, "x"), {}, other.values(), "r");
  CHECK_THROWS_AS(cka_profile(before, renamed), DimensionError);
  CHECK_THROWS_AS(cka_profile(before, test::random_cls(40, 11, 5, 1)), DimensionError);
  const auto csv = profile_csv(prof);
  CHECK(csv.find("layer") != std::string::npos);
}

TEST_CASE("layer selection") {
  const CkaProfile p{{}, {0, 0, 0, .1, .2, .3, .4}};
  CHECK(select_layers(p, 4).weights == std::vector<double>{0, 0, 0, .25, .25, .25, .25});
  const auto all = select_layers(p, 7);
  for (double w : all.weights) CHECK(w == 1.0 / 7.0);

  CkaProfile tie{{}, std::vector<double>(12, 0.0)};
  tie.distance[7] = tie.distance[8] = tie.distance[9] = 0.9;
  tie.distance[10] = tie.distance[11] = 0.5;
  const auto w = select_layers(tie, 4);
  CHECK(w.weights[11] == 0.25);
  CHECK(w.weights[10] == 0.0);
  CHECK_THROWS_AS(select_layers(p, 0), ConfigError);
  CHECK_THROWS_AS(select_layers(p, 8), ConfigError);
  CHECK(last_layers(6, 2).weights == std::vector<double>{0, 0, 0, 0, 0.5, 0.5});
}

TEST_CASE("style vectors") {
  const auto t = test::random_cls(3, 4, 5, 11);
  LayerWeights onehot{{0, 0, 1, 0}};
  const Vec v = style_vector(t, onehot, 1);
  for (std::size_t d = 0; d < 5; ++d) CHECK(v(static_cast<Eigen::Index>(d)) == t.vector(1, 2)[d]);

  std::vector<float> copies;
  for (int l = 0; l < 4; ++l) copies.insert(copies.end(), {1.f, 2.f});
  const EmbeddingTensor same(Mode::cls, 4, 2, {"a"}, {}, copies, "c");
  const Vec u = style_vector(same, last_layers(4, 4), 0);
  CHECK(u(0) == 1.0);
  CHECK(u(1) == 2.0);

  const EmbeddingTensor two(Mode::cls, 4, 1, {"a"}, {}, {1.f, 1.f, 3.f, 3.f}, "d");
  CHECK(style_vector(two, last_layers(4, 4), 0)(0) == 2.0);

  LayerWeights a{{0.1, 0.2, 0.3, 0.4}}, b{{0.5, 0.0, 0.0, 0.5}}, ab{{0.6, 0.2, 0.3, 0.9}};
  CHECK((style_vector(t, a, 2) + style_vector(t, b, 2) - style_vector(t, ab, 2)).norm() < 1e-12);

  const Mat m = style_matrix(t, a);
  CHECK(m.rows() == 3);
  CHECK((m.row(2).transpose() - style_vector(t, a, 2)).norm() == 0.0);
  CHECK_THROWS_AS(style_vector(t, LayerWeights{{1.0}}, 0), DimensionError);
  CHECK_THROWS_AS(style_vector(test::random_tokens({2}, 4, 5, 1), a, 0), DimensionError);
}
