#include "kehnn/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "kehnn/metrics.h"
#include "parallel.h"

namespace kehnn {

double cross_entropy_loss(const Tensor& pred, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= pred.size()) {
    throw std::out_of_range("cross_entropy_loss: label " +
                            std::to_string(label) + " outside [0," +
                            std::to_string(pred.size()) + ")");
  }
  return -std::log(std::max(pred[static_cast<std::size_t>(label)], 1e-12));
}

void adam_update(std::span<const ParamRef> params, std::span<const Tensor> grads,
                 AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_update: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) +
                     " gradients");
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.tensor->shape());
      state.second.emplace_back(p.tensor->shape());
    }
  }
  if (state.first.size() != params.size()) {
    throw ShapeError("adam_update: optimizer state tracks " +
                     std::to_string(state.first.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const ParamRef& ref = params[p];
    Tensor& theta = *ref.tensor;
    require_same_shape(theta, grads[p], "adam_update");
    require_same_shape(theta, state.first[p], "adam_update state");
    if (ref.frozen) continue;
    std::size_t start = 0;
    if (ref.pin_first_row && theta.rank() == 2) start = theta.dim(1);
    Tensor& m = state.first[p];
    Tensor& v = state.second[p];
    const Tensor& g = grads[p];
    for (std::size_t i = start; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_gradients(std::span<Tensor> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.values()) v *= scale;
  }
  return norm;
}

double batch_loss(const Model& model, std::span<const EncodedPair> batch,
                  Mode mode, std::uint64_t dropout_seed, Gradients* grads,
                  std::size_t threads) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<double> losses(batch.size());
  std::vector<Gradients> partial(grads ? workers : 0);
  internal::parallel_chunks(
      batch.size(), workers,
      [&](std::size_t w, std::size_t begin, std::size_t end) {
        Gradients* local = nullptr;
        if (grads) {
          partial[w] = zero_gradients(model.params);
          local = &partial[w];
        }
        for (std::size_t i = begin; i < end; ++i) {
          std::seed_seq seq{static_cast<std::uint32_t>(dropout_seed),
                            static_cast<std::uint32_t>(dropout_seed >> 32),
                            static_cast<std::uint32_t>(i)};
          std::mt19937_64 rng(seq);
          losses[i] = example_loss(model, batch[i], mode, &rng, local, scale);
        }
      });
  if (grads) {
    for (const auto& part : partial)
      for (std::size_t p = 0; p < grads->size(); ++p) (*grads)[p].add(part[p]);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total * scale;
}

TrainResult train(Model& model, std::span<const EncodedPair> train_set,
                  std::span<const EncodedPair> valid_set,
                  const TrainOptions& options) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (valid_set.empty()) throw std::invalid_argument("train: empty validation set");
  const TrainConfig& config = model.config;
  config.validate();
  validate_model(model);
  const std::size_t threads = options.threads ? options.threads : worker_threads();

  std::mt19937_64 shuffle_rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  TrainResult result;
  ModelParams best = model.params;
  bool have_best = false;
  std::size_t stale = 0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::vector<EncodedPair> batch;
    for (std::size_t b = 0; b * config.batch_size < order.size(); ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train_set[order[i]]);

      const std::uint64_t dropout_seed =
          config.seed * 0x9e3779b97f4a7c15ULL + epoch * 0x100000001b3ULL + b;
      Gradients grads = zero_gradients(model.params);
      double loss = 0.0;
      try {
        loss = batch_loss(model, batch, Mode::kTrain, dropout_seed, &grads,
                          threads);
      } catch (const NumericError& e) {
        throw DivergenceError("train: epoch " + std::to_string(epoch) + ": " +
                              e.what());
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("train: non-finite loss in epoch " +
                              std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(batch.size());
      if (config.grad_clip > 0.0) clip_gradients(grads, config.grad_clip);
      auto refs = model.params.refs(config);
      adam_update(refs, grads, adam, config.learning_rate);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.valid_metric = evaluate(model, valid_set, threads);
    record.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.history.push_back(record);
    if (options.on_epoch) options.on_epoch(record, model);

    if (!have_best || record.valid_metric > result.best_metric) {
      have_best = true;
      result.best_metric = record.valid_metric;
      result.best_epoch = epoch;
      best = model.params;
      stale = 0;
      if (options.on_best) options.on_best(model);
    } else if (++stale > config.patience) {
      break;
    }
  }
  model.params = std::move(best);
  return result;
}

ModelGradCheck check_model_gradients(Model& model,
                                     std::span<const EncodedPair> pairs,
                                     const GradCheckOptions& options) {
  auto refs = model.params.refs(model.config);
  Gradients all = zero_gradients(model.params);
  batch_loss(model, pairs, Mode::kInfer, 0, &all, 1);

  ModelGradCheck out;
  std::vector<Tensor*> tensors;
  std::vector<Tensor> analytic;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].frozen || refs[i].tensor->empty()) continue;
    tensors.push_back(refs[i].tensor);
    analytic.push_back(std::move(all[i]));
    out.names.push_back(refs[i].name);
    out.groups.push_back(refs[i].group);
  }
  auto loss = [&] { return batch_loss(model, pairs, Mode::kInfer, 0, nullptr, 1); };
  out.result = finite_diff_gradcheck(loss, tensors, analytic, options);
  return out;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,valid_metric,elapsed_seconds\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << r.train_loss << ',' << r.valid_metric << ','
       << r.elapsed_seconds << '\n';
  }
  return os.str();
}

}  // namespace kehnn
