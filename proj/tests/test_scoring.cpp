#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "openadapt/pipeline.hpp"
#include "openadapt/scoring.hpp"
#include "openadapt/text_io.hpp"

using namespace openadapt;
using namespace testsupport;

TEST_CASE("iscore examples") {
  for (std::size_t k = 2; k <= 9; ++k) {
    const std::vector<double> u(k, 1.0 / static_cast<double>(k));
    CHECK(iscore(u, u) == doctest::Approx(1.0 / static_cast<double>(k)).epsilon(1e-15));
    std::vector<double> a(k, 0.0), b(k, 0.0);
    a[0] = 1.0;
    b[k - 1] = 1.0;
    CHECK(iscore(a, a) == 1.0);
    CHECK(iscore(a, b) == 0.0);
  }
  CHECK(iscore(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.5);
  CHECK_THROWS_AS(iscore(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("iscore properties on random simplex pairs") {
  Rng rng(1);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t k = 2 + trial % 10;
    const auto p = random_simplex(k, rng, trial % 3 == 0);
    const auto q = random_simplex(k, rng, trial % 2 == 0);
    const double s = iscore(p, q);
    CHECK(s == iscore(q, p));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("alternative score examples") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(alt_score(ScoreKind::l2_distance, p, p) == 0.0);
  const std::vector<double> one{0.0, 1.0, 0.0};
  CHECK(alt_score(ScoreKind::mean_entropy, one, one) == 0.0);
  CHECK(alt_score(ScoreKind::cosine_distance, std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(alt_score(ScoreKind::inner_product, p, one) == iscore(p, one));

  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_simplex(4, rng);
    const auto b = random_simplex(4, rng);
    CHECK(alt_score(ScoreKind::l2_distance, a, b) <= 0.0);
    CHECK(alt_score(ScoreKind::mean_entropy, a, b) <= 0.0);
    CHECK(alt_score(ScoreKind::mean_entropy, a, b) >= -std::log(4.0) - 1e-12);
    const double c = alt_score(ScoreKind::cosine_distance, a, b);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0 + 1e-12);
  }
  for (ScoreKind k : {ScoreKind::inner_product, ScoreKind::l2_distance, ScoreKind::cosine_distance,
                      ScoreKind::mean_entropy}) {
    CHECK(parse_score_kind(score_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_score_kind("dot"), std::invalid_argument);
}

TEST_CASE("estimate_threshold on a constant model is the self score") {
  Rng rng(3);
  TwoHeadModel m = random_model(rng, 4, {6}, 3, 3);
  for (auto& layer : m.layers()) {
    for (double& v : layer.weight.mutable_data()) v = 0.0;
  }
  const HeadProbs p = m.infer(random_tensor({1, 4}, rng));
  const double expect = iscore(p.p1.data(), p.p2.data());
  const Tensor x = random_tensor({20, 4}, rng);
  CHECK(std::abs(estimate_threshold(m, x, 50, 7) - expect) <= 1e-15);
}

TEST_CASE("estimate_threshold with identical samples is their score") {
  Rng rng(4);
  const TwoHeadModel m = random_model(rng, 3, {5}, 3, 4);
  const Tensor row = random_tensor({1, 3}, rng);
  std::vector<double> rows;
  for (int i = 0; i < 10; ++i) rows.insert(rows.end(), row.data().begin(), row.data().end());
  const HeadProbs p = m.infer(row);
  const double expect = iscore(p.p1.data(), p.p2.data());
  CHECK(std::abs(estimate_threshold(m, Tensor::from({10, 3}, rows), 10, 1) - expect) <= 1e-12);
}

TEST_CASE("estimate_threshold with two samples scores their midpoint") {
  Rng rng(5);
  const TwoHeadModel m = random_model(rng, 3, {5}, 3, 4);
  const Tensor x = random_tensor({2, 3}, rng);
  std::vector<double> mid(3);
  for (std::size_t c = 0; c < 3; ++c) mid[c] = 0.5 * x.at(0, c) + 0.5 * x.at(1, c);
  const HeadProbs p = m.infer(Tensor::from({1, 3}, mid));
  const double expect = iscore(p.p1.data(), p.p2.data());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(std::abs(estimate_threshold(m, x, 7, seed) - expect) <= 1e-12);
    const double l2 = alt_score(ScoreKind::l2_distance, p.p1.data(), p.p2.data());
    CHECK(std::abs(estimate_threshold(m, x, 3, seed, ScoreKind::l2_distance) - l2) <= 1e-12);
  }
}

TEST_CASE("estimate_threshold matches a brute-force mixture loop") {
  // Replays the pair draw and scores each mixture one row at a time.
  Rng rng(6);
  const TwoHeadModel m = random_model(rng, 3, {5}, 3, 3);
  const Tensor x = random_tensor({9, 3}, rng, -2.0, 2.0);
  const std::uint64_t seed = 42;
  Rng draw(seed);
  std::uniform_int_distribution<std::size_t> pick_i(0, 8), pick_j(0, 7);
  double total = 0.0;
  for (int p = 0; p < 9; ++p) {
    const std::size_t i = pick_i(draw);
    std::size_t j = pick_j(draw);
    if (j >= i) ++j;
    CHECK(i != j);
    std::vector<double> mix(3);
    for (std::size_t c = 0; c < 3; ++c) mix[c] = 0.5 * x.at(i, c) + 0.5 * x.at(j, c);
    const HeadProbs hp = m.infer(Tensor::from({1, 3}, mix));
    total += iscore(hp.p1.data(), hp.p2.data());
  }
  CHECK(std::abs(estimate_threshold(m, x, 9, seed) - total / 9.0) <= 1e-12);
}

TEST_CASE("estimate_threshold is deterministic and validates input") {
  Rng rng(7);
  const TwoHeadModel m = random_model(rng, 3, {5}, 3, 3);
  const Tensor x = random_tensor({30, 3}, rng);
  CHECK(estimate_threshold(m, x, 30, 9) == estimate_threshold(m, x, 30, 9));
  CHECK_THROWS_AS(estimate_threshold(m, random_tensor({1, 3}, rng), 5, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_threshold(m, x, 0, 1), std::invalid_argument);
}

TEST_CASE("partition examples") {
  const std::vector<double> s{0.1, 0.5, 0.9};
  const Partition p = partition(s, {0.5, 0.05});
  CHECK(p.plus == std::vector<std::size_t>{2});
  CHECK(p.minus == std::vector<std::size_t>{0});
  CHECK(p.band == std::vector<std::size_t>{1});
  const Partition tie = partition(std::vector<double>{0.3}, {0.3, 0.0});
  CHECK(tie.band.size() == 1);
  const Partition wide = partition(s, {0.5, 1.0});
  CHECK(wide.plus.empty());
  CHECK(wide.minus.empty());
  CHECK(wide.band.size() == 3);
}

TEST_CASE("partition property: disjoint, exhaustive, strict") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const double w0 = u(rng);
    const double rho = trial % 4 == 0 ? 0.0 : 0.3 * u(rng);
    std::vector<double> s(1 + rng() % 12);
    for (double& v : s) {
      const auto pick = rng() % 5;
      // Hit the band edges exactly now and then.
      v = pick == 0 ? w0 + rho : pick == 1 ? w0 - rho : pick == 2 ? w0 : u(rng);
    }
    const Partition p = partition(s, {w0, rho});
    std::vector<int> seen(s.size(), 0);
    for (auto i : p.plus) { ++seen[i]; CHECK(s[i] > w0 + rho); }
    for (auto i : p.minus) { ++seen[i]; CHECK(s[i] < w0 - rho); }
    for (auto i : p.band) {
      ++seen[i];
      CHECK(s[i] <= w0 + rho);
      CHECK(s[i] >= w0 - rho);
    }
    for (int c : seen) CHECK(c == 1);
  }
}

TEST_CASE("slack examples") {
  CHECK(std::abs(slack_from_threshold(0.4, 0.1) - 0.04) <= 1e-15);
  CHECK(slack_from_threshold(0.4, 0.0) == 0.0);
  CHECK(slack_from_threshold(0.4) == slack_from_threshold(0.4, 0.1));
  CHECK_THROWS_AS(slack_from_threshold(-0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS((ThresholdBand{0.5, -0.1}.validate()), std::invalid_argument);
}

TEST_CASE("score dump round trip") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(40);
  for (double& v : s) v = u(rng);
  const Partition p = partition(s, {0.5, 0.05});
  const auto recs = parse_score_dump(format_score_dump(s, p));
  REQUIRE(recs.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(recs[i].index == i);
    CHECK(recs[i].score == s[i]);
    CHECK(recs[i].tag == (s[i] > 0.55 ? "+" : s[i] < 0.45 ? "-" : "band"));
  }
  CHECK_THROWS_AS(parse_score_dump("idx,score\n"), FormatError);
  CHECK_THROWS_AS(parse_score_dump("index,score,tag\n0,0.5,maybe\n"), FormatError);
}

TEST_CASE("trained source model scores known target samples above unknown ones") {
  const RunConfig cfg;
  const auto [source, target] = make_data(cfg, 0);
  const SourceStage stage = run_source_stage(cfg, source, 0);
  const auto scores = score_rows(stage.checkpoint.model.infer(target.x));
  double known = 0.0, unknown = 0.0;
  std::size_t nk = 0, nu = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const bool is_known = target.y[i] < static_cast<int>(cfg.split.shared);
    (is_known ? known : unknown) += scores[i];
    ++(is_known ? nk : nu);
  }
  CHECK(known / nk > unknown / nu);
}
