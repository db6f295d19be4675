#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "support.hpp"
#include "openadapt/checkpoint.hpp"
#include "openadapt/eval.hpp"
#include "openadapt/pipeline.hpp"
#include "openadapt/train.hpp"

using namespace openadapt;
using namespace testsupport;

namespace {

struct Fixture {
  RunConfig cfg;
  DatasetBundle source;
  DatasetBundle target;
};

Fixture default_fixture(std::uint64_t seed = 0) {
  Fixture f;
  auto [s, t] = make_data(f.cfg, seed);
  f.source = std::move(s);
  f.target = std::move(t);
  return f;
}

TwoHeadModel fresh_model(const RunConfig& cfg, std::size_t classes, std::uint64_t seed) {
  Architecture arch = cfg.architecture();
  arch.classes = classes;
  return TwoHeadModel(arch, {derive_seed(seed, "init-features"), derive_seed(seed, "init-head1"),
                             derive_seed(seed, "init-head2")});
}

bool bytes_equal(const Tensor& a, const Tensor& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("lr_schedule examples") {
  CHECK(lr_schedule(0.01, 0.0) == 0.01);
  CHECK(std::abs(lr_schedule(0.01, 1.0) - 0.0016556) <= 1e-7);
  CHECK(std::abs(lr_schedule(0.01, 1.0) - 0.01 * std::pow(11.0, -0.75)) <= 1e-18);
  double prev = lr_schedule(0.01, 0.0);
  for (int i = 1; i <= 100; ++i) {
    const double cur = lr_schedule(0.01, i / 100.0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("sgd_step examples") {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  const double lr[] = {0.1};

  Tensor w = Tensor::vector({1.0, -2.0});
  Tensor params[] = {w};
  SgdState state;
  state.velocity = {{0.5, -1.0}};
  const std::vector<double> zero[] = {{0.0, 0.0}};
  sgd_step(params, zero, state, cfg, lr);
  CHECK(state.velocity[0][0] == 0.9 * 0.5);
  CHECK(state.velocity[0][1] == 0.9 * -1.0);
  CHECK(w[0] == 1.0 - 0.1 * 0.45);

  cfg.momentum = 0.0;
  Tensor u = Tensor::vector({1.0, 2.0});
  Tensor pu[] = {u};
  SgdState fresh;
  const std::vector<double> g[] = {{0.5, -0.25}};
  sgd_step(pu, g, fresh, cfg, lr);
  CHECK(u[0] == 1.0 - 0.1 * 0.5);
  CHECK(u[1] == 2.0 + 0.1 * 0.25);
}

TEST_CASE("sgd two-step momentum hand trace") {
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.momentum = 0.9;
  const double lr = 0.05, g = 0.3, w0 = 2.0;
  Tensor w = Tensor::vector({w0});
  Tensor params[] = {w};
  SgdState state;
  const std::vector<double> grad[] = {{g}};
  const double lrs[] = {lr};
  sgd_step(params, grad, state, cfg, lrs);
  sgd_step(params, grad, state, cfg, lrs);
  // Scalar replay of v <- m v + g ; w <- w - lr v.
  double v = 0.0, x = w0;
  for (int i = 0; i < 2; ++i) {
    v = 0.9 * v + g;
    x -= lr * v;
  }
  CHECK(w[0] == x);
  CHECK(std::abs((w0 - w[0]) - lr * g * (1.0 + 1.9)) <= 1e-15);
}

TEST_CASE("sgd weight decay is coupled into the velocity") {
  OptimConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.1;
  Tensor w = Tensor::vector({2.0});
  Tensor params[] = {w};
  SgdState state;
  const std::vector<double> grad[] = {{0.0}};
  const double lrs[] = {0.5};
  sgd_step(params, grad, state, cfg, lrs);
  CHECK(w[0] == 2.0 - 0.5 * 0.2);
}

TEST_CASE("sgd rejects non-finite gradients") {
  OptimConfig cfg;
  Tensor w = Tensor::vector({1.0});
  Tensor params[] = {w};
  SgdState state;
  const std::vector<double> grad[] = {{std::numeric_limits<double>::quiet_NaN()}};
  const double lrs[] = {0.1};
  CHECK_THROWS_AS(sgd_step(params, grad, state, cfg, lrs), NonFiniteLoss);
  CHECK(w[0] == 1.0);
}

TEST_CASE("source training fits the default source domain") {
  Fixture f = default_fixture();
  TwoHeadModel m = fresh_model(f.cfg, f.source.label_set.size(), 0);
  OptimConfig optim = f.cfg.source_optim;
  const TrainLog log = train_source(m, f.source, f.cfg.loss, optim);
  REQUIRE(log.records.size() == optim.max_iters);
  CHECK(log.records.back().loss <= log.records.front().loss);
  CHECK(log.records.front().lr == optim.lr0);
  CHECK(std::abs(log.records.back().lr -
                 lr_schedule(optim.lr0, static_cast<double>(optim.max_iters - 1) / optim.max_iters)) <= 1e-18);

  const HeadProbs p = m.infer(f.source.x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < f.source.size(); ++i) {
    const int pred = classify(p.p1.data().subspan(i * p.p1.cols(), p.p1.cols()),
                              p.p2.data().subspan(i * p.p2.cols(), p.p2.cols()), -1.0);
    correct += f.source.label_set[static_cast<std::size_t>(pred)] == f.source.y[i];
  }
  CHECK(static_cast<double>(correct) / f.source.size() > 0.95);
}

TEST_CASE("orthogonality weight lowers the final penalty") {
  Fixture f = default_fixture(1);
  auto run = [&](double lambda) {
    TwoHeadModel m = fresh_model(f.cfg, f.source.label_set.size(), 1);
    LossConfig loss = f.cfg.loss;
    loss.lambda = lambda;
    OptimConfig optim = f.cfg.source_optim;
    optim.seed = 1;
    (void)train_source(m, f.source, loss, optim);
    return orth_penalty(m.head1(), m.head2()).item();
  };
  CHECK(run(0.01) < run(0.0));
}

TEST_CASE("source training is deterministic and seed-sensitive") {
  Fixture f = default_fixture();
  OptimConfig optim = f.cfg.source_optim;
  optim.max_iters = 50;
  TwoHeadModel a = fresh_model(f.cfg, 4, 0), b = fresh_model(f.cfg, 4, 0), c = fresh_model(f.cfg, 4, 0);
  const TrainLog la = train_source(a, f.source, f.cfg.loss, optim);
  const TrainLog lb = train_source(b, f.source, f.cfg.loss, optim);
  optim.seed = 7;
  const TrainLog lc = train_source(c, f.source, f.cfg.loss, optim);
  CHECK(la.final_checksum == lb.final_checksum);
  CHECK(la.to_csv() == lb.to_csv());
  CHECK(la.final_checksum != lc.final_checksum);
}

TEST_CASE("non-finite data aborts training") {
  Fixture f = default_fixture();
  std::vector<double> x(f.source.x.data().begin(), f.source.x.data().end());
  for (double& v : x) v = std::numeric_limits<double>::quiet_NaN();
  DatasetBundle bad{Tensor::from(f.source.x.shape(), x), f.source.y, f.source.label_set, Domain::source};
  TwoHeadModel m = fresh_model(f.cfg, 4, 0);
  CHECK_THROWS_AS(train_source(m, bad, f.cfg.loss, f.cfg.source_optim), NonFiniteLoss);

  std::vector<double> tx(f.target.x.data().begin(), f.target.x.data().end());
  tx[0] = std::numeric_limits<double>::infinity();
  OptimConfig optim = f.cfg.adapt_optim;
  optim.batch_size = static_cast<std::size_t>(f.target.size());  // the bad row is in every batch
  CHECK_THROWS_AS(adapt_target(m, Tensor::from(f.target.x.shape(), tx), {0.3, 0.0}, f.cfg.loss, optim),
                  NonFiniteLoss);
}

TEST_CASE("adaptation freezes both heads and moves the feature module") {
  Fixture f = default_fixture();
  SourceStage src = run_source_stage(f.cfg, f.source, 0);
  TwoHeadModel m = src.checkpoint.model.clone();
  const Tensor w1 = m.head1().detach();
  const Tensor w2 = m.head2().detach();
  const Tensor layer0 = m.layers()[0].weight.detach();
  const double w0 = estimate_threshold(m, f.target.x, f.target.size(), 3);
  OptimConfig optim = f.cfg.adapt_optim;
  optim.max_iters = 100;
  const TrainLog log = adapt_target(m, f.target.x, {w0, slack_from_threshold(w0)}, f.cfg.loss, optim);
  CHECK(bytes_equal(m.head1(), w1));
  CHECK(bytes_equal(m.head2(), w2));
  CHECK_FALSE(bytes_equal(m.layers()[0].weight, layer0));
  std::size_t updated = 0;
  for (const auto& r : log.records) updated += r.updated;
  CHECK(updated > 0);
  CHECK_FALSE(log.degenerate_band);

  // Same for every score kind and with re-estimation switched on.
  for (ScoreKind kind : {ScoreKind::l2_distance, ScoreKind::cosine_distance, ScoreKind::mean_entropy}) {
    TwoHeadModel k = src.checkpoint.model.clone();
    const double kw0 = estimate_threshold(k, f.target.x, f.target.size(), 3, kind);
    AdaptOptions opts;
    opts.score = kind;
    opts.reestimate_every = 25;
    optim.max_iters = 60;
    (void)adapt_target(k, f.target.x, {kw0, slack_from_threshold(std::abs(kw0))}, f.cfg.loss, optim, opts);
    CHECK(bytes_equal(k.head1(), w1));
    CHECK(bytes_equal(k.head2(), w2));
  }
}

TEST_CASE("a band wider than the score range makes no updates") {
  Fixture f = default_fixture();
  SourceStage src = run_source_stage(f.cfg, f.source, 0);
  TwoHeadModel m = src.checkpoint.model.clone();
  const auto before = m.parameters();
  std::vector<Tensor> copies;
  for (const Tensor& t : before) copies.push_back(t.detach());
  const auto mean_before = m.bn().running_mean;
  OptimConfig optim = f.cfg.adapt_optim;
  optim.max_iters = 30;
  const TrainLog log = adapt_target(m, f.target.x, {0.5, 10.0}, f.cfg.loss, optim);
  const auto after = m.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(bytes_equal(after[i], copies[i]));
  CHECK(m.bn().running_mean != mean_before);
  CHECK(log.degenerate_band);
  for (const auto& r : log.records) {
    CHECK_FALSE(r.updated);
    CHECK(r.n_plus == 0);
    CHECK(r.n_minus == 0);
  }
}

TEST_CASE("adaptation is deterministic") {
  Fixture f = default_fixture();
  SourceStage src = run_source_stage(f.cfg, f.source, 0);
  OptimConfig optim = f.cfg.adapt_optim;
  optim.max_iters = 80;
  TwoHeadModel a = src.checkpoint.model.clone();
  TwoHeadModel b = src.checkpoint.model.clone();
  const TrainLog la = adapt_target(a, f.target.x, {0.5, 0.05}, f.cfg.loss, optim);
  const TrainLog lb = adapt_target(b, f.target.x, {0.5, 0.05}, f.cfg.loss, optim);
  CHECK(la.to_csv() == lb.to_csv());
  CHECK(model_checksum(a) == model_checksum(b));
}

TEST_CASE("optimizer config validation") {
  OptimConfig c;
  c.validate();
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.lr0 = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
