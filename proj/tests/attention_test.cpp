#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "sparf/core/attention.hpp"
#include "sparf/core/kernels.hpp"
#include "sparf/core/test_vectors.hpp"
#include "sparf/errors.hpp"
#include "sparf/oracle/scalar_sparf.hpp"

using namespace sparf;
using namespace sparf::core;

namespace {

HeadTensors two_by_two() {
  return HeadTensors::from_cache({1, 0}, Matrix(2, 2, {1, 0, 0, 1}), Matrix(2, 2, {1, 0, 0, 1}));
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("dense attention on the 2x2 identity") {
  const auto out = dense_attention(two_by_two());
  CHECK(out[0] == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(out[1] == doctest::Approx(0.3302).epsilon(1e-4));
}

TEST_CASE("dense attention edge cases") {
  auto t = random_head(8, 5, 1);
  t.values = Matrix(5, 8, 0.0);
  for (double v : dense_attention(t)) CHECK(v == 0.0);

  const auto one = random_head(8, 1, 2);
  CHECK(max_diff(dense_attention(one), std::vector<double>(one.values.row(0).begin(), one.values.row(0).end())) < 1e-15);

  auto bad = random_head(8, 4, 3);
  bad.q.pop_back();
  CHECK_THROWS_AS(dense_attention(bad), ConfigError);
}

TEST_CASE("argtopk by magnitude and raw value") {
  const std::vector<double> v{0.5, -2.0, 1.0, 0.25};
  CHECK(argtopk(v, 2, TopKKey::kMagnitude, Axis::kEmbedding).selected == std::vector<std::size_t>{1, 2});
  const std::vector<double> tie{3, 3, 1};
  CHECK(argtopk(tie, 1, TopKKey::kRaw, Axis::kToken).selected == std::vector<std::size_t>{0});
  CHECK(argtopk(v, 4, TopKKey::kRaw, Axis::kToken).size() == 4);
  CHECK_THROWS_AS(argtopk(v, 5, TopKKey::kRaw, Axis::kToken), ConfigError);
  CHECK_THROWS_AS(argtopk(v, 0, TopKKey::kRaw, Axis::kToken), ConfigError);
}

TEST_CASE("approximate scores") {
  const auto t = two_by_two();
  const auto r1 = argtopk(t.q, 1, TopKKey::kMagnitude, Axis::kEmbedding);
  const auto s = approx_scores(t, r1);
  CHECK(s[0] == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(s[1] == doctest::Approx(0.3302).epsilon(1e-4));

  SUBCASE("r = d_h reproduces the dense softmax") {
    const auto h = random_head(16, 40, 5);
    const auto all = argtopk(h.q, 16, TopKKey::kMagnitude, Axis::kEmbedding);
    std::vector<double> logits(40);
    for (std::size_t i = 0; i < 40; ++i) {
      double dot = 0;
      for (std::size_t d = 0; d < 16; ++d) dot += h.q[d] * h.keys(i, d);
      logits[i] = dot / 4.0;
    }
    kernels::softmax_inplace(logits);
    CHECK(max_diff(approx_scores(h, all), logits) < 1e-12);
  }
  SUBCASE("zero key columns give uniform scores") {
    auto h = random_head(4, 8, 6);
    const auto sel = argtopk(h.q, 2, TopKKey::kMagnitude, Axis::kEmbedding);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t d : sel.selected) h.keys(i, d) = 0;
    for (double v : approx_scores(h, sel)) CHECK(v == doctest::Approx(1.0 / 8));
  }
  SUBCASE("zero query is degenerate") {
    auto h = random_head(4, 8, 7);
    std::fill(h.q.begin(), h.q.end(), 0.0);
    const auto sel = argtopk(h.q, 2, TopKKey::kMagnitude, Axis::kEmbedding);
    CHECK_THROWS_AS(approx_scores(h, sel), DegenerateQueryError);
    const auto r = sparf_attention(h, {4, 8, 2, 3, 1, 1});
    CHECK(r.degenerate_query);
    CHECK(r.out.size() == 4);
  }
}

TEST_CASE("alpha mass") {
  const std::vector<double> s{0.6698, 0.3302};
  SelectionMask first{Axis::kToken, {0}, 2, 1};
  CHECK(alpha_mass(s, first) == doctest::Approx(0.6698));
  SelectionMask both{Axis::kToken, {0, 1}, 2, 1};
  CHECK(alpha_mass(s, both) == doctest::Approx(1.0).epsilon(1e-6));
  const std::vector<double> uniform(8, 0.125);
  SelectionMask two{Axis::kToken, {3, 6}, 8, 1};
  CHECK(alpha_mass(uniform, two) == doctest::Approx(0.25));
}

TEST_CASE("group expansion and filtering") {
  SelectionMask m{Axis::kToken, {3, 17}, 32, 16};
  CHECK(group_expand(m, 16) == std::vector<std::size_t>{0, 1});
  CHECK(group_expand(m, 1) == std::vector<std::size_t>{3, 17});
  SelectionMask full{Axis::kToken, {}, 32, 16};
  for (std::size_t i = 0; i < 16; ++i) full.selected.push_back(i);
  CHECK(group_expand(full, 16) == std::vector<std::size_t>{0});

  const auto t = random_head(4, 32, 9);
  const auto ids = group_expand(m, 16);
  const auto loaded = load_row_groups(t.keys, ids, 16);
  CHECK(loaded.groups.size() == 2);
  const auto rows = filter_groups(loaded, m);
  CHECK(rows.rows() == 2);
  CHECK(rows == oracle::direct_gather_rows(t.keys, m.selected));

  const auto whole = filter_groups(load_row_groups(t.keys, std::vector<std::size_t>{0}, 16), full);
  CHECK(whole == oracle::direct_gather_rows(t.keys, full.selected));

  const std::vector<std::size_t> only_first{0};
  CHECK_THROWS_AS(filter_groups(load_row_groups(t.keys, only_first, 16), m), InvariantError);

  SUBCASE("column groups") {
    SelectionMask e{Axis::kEmbedding, {1, 2}, 4, 2};
    const auto cols = load_column_groups(t.keys, group_expand(e, 2), 2);
    const auto got = filter_groups(cols, e);
    CHECK(got.rows() == 2);
    CHECK(got.cols() == 32);
    for (std::size_t s = 0; s < 32; ++s) {
      CHECK(got(0, s) == t.keys(s, 1));
      CHECK(got(1, s) == t.keys(s, 2));
    }
  }
}

TEST_CASE("dual-step loading equals a direct gather for random masks") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t S = 1 + rng() % 200;
    const auto t = random_head(3, S, trial);
    SelectionMask m{Axis::kToken, {}, S, 1};
    for (std::size_t i = 0; i < S; ++i)
      if (rng() % 3 == 0) m.selected.push_back(i);
    for (std::size_t g : {1, 2, 4, 8, 16, 64}) {
      m.group_size = g;
      CHECK(filter_groups(load_row_groups(t.values, group_expand(m, g), g), m) ==
            oracle::direct_gather_rows(t.values, m.selected));
    }
  }
}

TEST_CASE("running value mean") {
  std::vector<double> mean{0, 0};
  std::size_t count = 0;
  const std::vector<double> a{2, 4}, z{0, 0};
  update_value_mean(mean, count, a);
  CHECK(mean == std::vector<double>{2, 4});
  update_value_mean(mean, count, z);
  CHECK(mean == std::vector<double>{1, 2});

  const auto t = random_head(16, 300, 10);
  std::vector<double> running(16, 0.0);
  count = 0;
  for (std::size_t s = 0; s < 300; ++s) update_value_mean(running, count, t.values.row(s));
  CHECK(max_diff(running, t.value_mean) < 1e-9);
}

TEST_CASE("sparf matches the scalar transcription and SparQ") {
  const HeadConfig small{4, 8, 2, 2, 2, 4};
  const auto t = random_head(4, 8, 11);
  const auto got = sparf_attention(t, small);
  const auto ref = oracle::scalar_sparf(t, 2, 2, 2, 4);
  CHECK(max_diff(got.out, ref.out) < 1e-12);
  CHECK(got.tokens.selected == ref.tokens);
  CHECK(got.embeddings.selected == ref.embeddings);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 60; ++i) {
    const std::size_t d = std::size_t{8} << (rng() % 4), S = 1 + rng() % 300;
    const std::size_t r = 1 + rng() % d, k = 1 + rng() % S;
    const auto h = random_head(d, S, rng());
    const auto unit = sparf_attention(h, {d, S, r, k, 1, 1});
    const auto sparq = sparq_attention(h, r, k);
    CHECK(unit.out == sparq.out);
    CHECK(unit.alpha == sparq.alpha);
    CHECK(max_diff(unit.out, oracle::scalar_sparf(h, r, k, 1, 1).out) < 1e-9);
    const auto grouped = sparf_attention(h, {d, S, r, k, std::min<std::size_t>(8, d), 16});
    CHECK(grouped.out == unit.out);
  }
}

TEST_CASE("sparq with one kept token") {
  const auto t = random_head(8, 20, 13);
  const auto r = sparq_attention(t, 4, 1);
  REQUIRE(r.tokens.size() == 1);
  const std::size_t j = r.tokens.selected[0];
  for (std::size_t c = 0; c < 8; ++c)
    CHECK(r.out[c] == doctest::Approx(r.alpha * t.values(j, c) + (1 - r.alpha) * t.value_mean[c]));
}

TEST_CASE("full selection reproduces dense attention") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t d = 16 << (seed % 3), S = 32 + 37 * seed;
    const auto t = random_head(d, S, seed);
    const auto r = sparf_attention(t, {d, S, d, S, 8, 16});
    CHECK(r.alpha == doctest::Approx(1.0).epsilon(1e-9));
    const auto dense = oracle::scalar_dense(t);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < d; ++i) {
      num += (r.out[i] - dense[i]) * (r.out[i] - dense[i]);
      den += dense[i] * dense[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
    CHECK(r.row_trace.bytes_over_channel == r.row_trace.dense_bytes);
  }
}

TEST_CASE("access traces are ordered and deterministic") {
  const HeadConfig cfg{128, 1000, 16, 125, 8, 16};
  const auto t = random_head(128, 1000, 14);
  const auto a = sparf_attention(t, cfg);
  const auto b = sparf_attention(t, cfg);
  CHECK(a.out == b.out);
  CHECK(a.row_trace == b.row_trace);
  CHECK(a.column_trace == b.column_trace);
  for (const auto& tr : {a.row_trace, a.column_trace}) {
    CHECK(tr.bytes_after_filter <= tr.bytes_over_channel);
    CHECK(tr.bytes_over_channel <= tr.dense_bytes);
    CHECK(tr.bytes_over_channel == tr.pages_requested * tr.page_size);
  }
  CHECK(a.row_trace.page_size == 4096);
}

TEST_CASE("ragged padding is never kept") {
  const auto t = random_head(16, 64, 15);
  SparfOptions opts;
  opts.padding.assign(64, 0);
  for (std::size_t i = 48; i < 64; ++i) opts.padding[i] = 1;
  const auto r = sparf_attention(t, {16, 64, 8, 20, 8, 16}, opts);
  for (std::size_t j : r.tokens.selected) CHECK(j < 48);
}

TEST_CASE("head config validation") {
  CHECK_THROWS_AS((HeadConfig{16, 32, 0, 4, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((HeadConfig{16, 32, 17, 4, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((HeadConfig{16, 32, 4, 33, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((HeadConfig{16, 32, 4, 4, 0, 1}.validate()), ConfigError);
  CHECK_NOTHROW((HeadConfig{16, 32, 4, 4, 8, 16}.validate()));
}

TEST_CASE("serial and parallel kernels are bitwise equal") {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> nd;
  Matrix m(5000, 64);
  for (auto& v : m.data()) v = nd(rng);
  std::vector<double> q(64), w(5000);
  for (auto& v : q) v = nd(rng);
  for (auto& v : w) v = nd(rng);
  std::vector<double> a(5000), b(5000), c(64), d(64);
  kernels::row_logits_serial(q, m, 0.3, a);
  kernels::row_logits_parallel(q, m, 0.3, b);
  kernels::weighted_row_sum_serial(w, m, c);
  kernels::weighted_row_sum_parallel(w, m, d);
  CHECK(a == b);
  CHECK(c == d);
  std::vector<double> x{1000, 1001, 999};
  kernels::softmax_inplace(x);
  CHECK(x[0] + x[1] + x[2] == doctest::Approx(1.0));
}

TEST_CASE("frozen test vectors") {
  const auto vectors = parse_test_vectors(slurp(SPARF_TEST_DATA "/attention_vectors.json"));
  REQUIRE(vectors.size() >= 7);
  for (const auto& v : vectors) {
    CAPTURE(v.name);
    CHECK(max_diff(v.evaluate(), v.expected) <= v.tolerance);
  }
  const auto again = parse_test_vectors(dump_test_vectors(vectors));
  CHECK(again.size() == vectors.size());
  CHECK_THROWS_AS(parse_test_vectors("{\"vectors\": [{\"op\": \"dense\"}]}"), ConfigError);
  CHECK_THROWS_AS(parse_test_vectors("not json"), ConfigError);
}
