#include "openadapt/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "openadapt/checkpoint.hpp"
#include "openadapt/rng.hpp"
#include "openadapt/text_io.hpp"

namespace openadapt {

void OptimConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  if (!(new_layer_lr_mult > 0.0)) throw std::invalid_argument("new_layer_lr_mult must be > 0");
}

double lr_schedule(double lr0, double progress) {
  return lr0 * std::pow(1.0 + 10.0 * progress, -0.75);
}

void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, SgdState& state,
              const OptimConfig& cfg, std::span<const double> lr) {
  if (grads.size() != params.size() || lr.size() != params.size()) {
    throw std::invalid_argument("sgd_step: params, grads and learning rates differ in count");
  }
  if (state.velocity.empty()) {
    for (const Tensor& p : params) state.velocity.emplace_back(p.size(), 0.0);
  }
  if (state.velocity.size() != params.size()) throw std::invalid_argument("sgd_step: stale state");
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto w = params[t].mutable_data();
    const auto& g = grads[t];
    auto& v = state.velocity[t];
    if (g.size() != w.size() || v.size() != w.size()) {
      throw std::invalid_argument("sgd_step: shape mismatch for parameter " + std::to_string(t));
    }
    for (double gi : g) {
      if (!std::isfinite(gi)) throw NonFiniteLoss("sgd_step: non-finite gradient");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
      w[i] -= lr[t] * v[i];
    }
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  for (const std::string& h : header) os << "# " << h << '\n';
  os << "# final_checksum=" << final_checksum << '\n';
  os << "# degenerate_band=" << (degenerate_band ? 1 : 0) << '\n';
  os << "iteration,loss,lr,n_plus,n_minus,updated\n";
  for (const TrainRecord& r : records) {
    os << r.iteration << ',' << format_double(r.loss) << ',' << format_double(r.lr) << ','
       << r.n_plus << ',' << r.n_minus << ',' << (r.updated ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

// Hidden layers are the "backbone"; bottleneck affine layer, bn and heads
// count as new layers for the lr multiplier.
std::vector<double> layer_multipliers(const TwoHeadModel& model, std::size_t count,
                                      double new_mult) {
  const std::size_t backbone = 2 * model.architecture().hidden.size();
  std::vector<double> out(count, new_mult);
  for (std::size_t i = 0; i < backbone && i < count; ++i) out[i] = 1.0;
  return out;
}

std::vector<std::vector<double>> collect_grads(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
  return out;
}

}  // namespace

TrainLog train_source(TwoHeadModel& model, const DatasetBundle& source, const LossConfig& loss_cfg,
                      const OptimConfig& optim_cfg) {
  loss_cfg.validate();
  optim_cfg.validate();
  if (source.label_set.size() != model.classes()) {
    throw std::invalid_argument("train_source: model class count differs from source label set");
  }
  std::vector<std::size_t> class_index(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const auto it = std::find(source.label_set.begin(), source.label_set.end(), source.y[i]);
    if (it == source.label_set.end()) throw std::invalid_argument("train_source: undeclared label");
    class_index[i] = static_cast<std::size_t>(it - source.label_set.begin());
  }

  ClassBalancedSampler sampler(source, optim_cfg.batch_size, derive_seed(optim_cfg.seed, "batching"));
  std::vector<Tensor> params = model.parameters();
  const auto mult = layer_multipliers(model, params.size(), optim_cfg.new_layer_lr_mult);
  SgdState state;
  TrainLog log;
  log.header.push_back("stage=source");

  std::vector<std::size_t> labels;
  std::vector<double> lrs(params.size());
  for (std::size_t it = 0; it < optim_cfg.max_iters; ++it) {
    Batch batch = sampler.next();
    labels.clear();
    for (std::size_t idx : batch.indices) labels.push_back(class_index[idx]);

    Tape tape;
    Tensor loss;
    {
      auto scope = tape.record();
      loss = source_loss(model, batch.x, labels, loss_cfg);
    }
    if (!std::isfinite(loss.item())) {
      throw NonFiniteLoss("train_source: non-finite loss at iteration " + std::to_string(it));
    }
    tape.backward(loss);

    const double lr = lr_schedule(optim_cfg.lr0, static_cast<double>(it) /
                                                     static_cast<double>(optim_cfg.max_iters));
    for (std::size_t t = 0; t < params.size(); ++t) lrs[t] = lr * mult[t];
    sgd_step(params, collect_grads(params), state, optim_cfg, lrs);
    log.records.push_back({it, loss.item(), lr, 0, 0, true});
  }
  log.final_checksum = model_checksum(model);
  return log;
}

TrainLog adapt_target(TwoHeadModel& model, const Tensor& target_x, ThresholdBand band,
                      const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                      const AdaptOptions& options) {
  loss_cfg.validate();
  optim_cfg.validate();
  band.validate();
  if (target_x.rank() != 2 || target_x.rows() < 2) {
    throw std::invalid_argument("adapt_target: need at least two target samples");
  }

  UniformSampler sampler(target_x.rows(), optim_cfg.batch_size,
                         derive_seed(optim_cfg.seed, "batching"));
  // Heads stay out of the optimizer entirely.
  std::vector<Tensor> params = model.feature_parameters();
  const auto mult = layer_multipliers(model, params.size(), optim_cfg.new_layer_lr_mult);
  SgdState state;
  TrainLog log;
  log.header.push_back("stage=adapt");
  log.header.push_back("w0=" + format_double(band.w0));
  log.header.push_back("rho=" + format_double(band.rho));
  log.header.push_back("score=" + std::string(score_kind_name(options.score)));

  const std::size_t epoch = std::max<std::size_t>(1, sampler.epoch_length());
  bool epoch_had_update = false;
  std::vector<double> lrs(params.size());
  for (std::size_t it = 0; it < optim_cfg.max_iters; ++it) {
    if (options.reestimate_every > 0 && it > 0 && it % options.reestimate_every == 0) {
      band.w0 = estimate_threshold(model, target_x, target_x.rows(),
                                   derive_seed(optim_cfg.seed, "mixup-" + std::to_string(it)),
                                   options.score);
      band.rho = slack_from_threshold(std::abs(band.w0), options.slack_ratio);
      log.header.push_back("reestimate@" + std::to_string(it) + "=" + format_double(band.w0));
    }

    const auto indices = sampler.next();
    const Tensor x = gather_rows(target_x, indices);
    const double lr = lr_schedule(optim_cfg.lr0, static_cast<double>(it) /
                                                     static_cast<double>(optim_cfg.max_iters));

    Tape tape;
    Tensor loss;
    Partition part;
    {
      auto scope = tape.record();
      HeadProbs probs = model.forward_probs(x, Mode::train);
      const auto scores = score_rows(probs, options.score);
      // NaN scores would otherwise land silently in the ignored band.
      for (double v : scores) {
        if (!std::isfinite(v)) {
          throw NonFiniteLoss("adapt_target: non-finite score at iteration " + std::to_string(it));
        }
      }
      part = partition(scores, band);
      if (!part.plus.empty() || !part.minus.empty()) {
        loss = target_loss(probs, part.plus, part.minus, loss_cfg);
      }
    }

    TrainRecord rec{it, 0.0, lr, part.plus.size(), part.minus.size(), false};
    if (!part.plus.empty() || !part.minus.empty()) {
      if (!std::isfinite(loss.item())) {
        throw NonFiniteLoss("adapt_target: non-finite loss at iteration " + std::to_string(it));
      }
      tape.backward(loss);
      for (std::size_t t = 0; t < params.size(); ++t) lrs[t] = lr * mult[t];
      sgd_step(params, collect_grads(params), state, optim_cfg, lrs);
      rec.loss = loss.item();
      rec.updated = true;
      epoch_had_update = true;
    }
    log.records.push_back(rec);

    if ((it + 1) % epoch == 0) {
      if (!epoch_had_update) log.degenerate_band = true;
      epoch_had_update = false;
    }
  }
  log.final_checksum = model_checksum(model);
  return log;
}

}  // namespace openadapt
