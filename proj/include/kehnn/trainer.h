#ifndef KEHNN_TRAINER_H_
#define KEHNN_TRAINER_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kehnn/gradcheck.h"
#include "kehnn/matcher.h"
#include "kehnn/tensor.h"

namespace kehnn {

// -log(max(pred[label], 1e-12)).
double cross_entropy_loss(const Tensor& pred, int label);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> first;   // m
  std::vector<Tensor> second;  // v
};

// One Adam step with bias correction over every non-frozen parameter. Moments
// are created on the first call. Rows pinned by ParamRef stay untouched.
void adam_update(std::span<const ParamRef> params, std::span<const Tensor> grads,
                 AdamState& state, double lr);

// Scales grads so their global L2 norm is at most max_norm. Returns the norm
// before scaling.
double clip_gradients(std::span<Tensor> grads, double max_norm);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_metric = 0.0;
  double elapsed_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

struct TrainOptions {
  // Worker threads per batch; 0 uses worker_threads().
  std::size_t threads = 0;
  // Called after every epoch with the current (not best) model.
  std::function<void(const EpochRecord&, const Model&)> on_epoch;
  // Called whenever the validation metric improves.
  std::function<void(const Model&)> on_best;
};

// Mini-batch Adam on the mean cross-entropy with dropout and early stopping.
// Stops after more than `patience` consecutive epochs without a strict
// improvement of the validation metric, or after max_epochs. On return the
// model holds the parameters of the best validation epoch.
TrainResult train(Model& model, std::span<const EncodedPair> train_set,
                  std::span<const EncodedPair> valid_set,
                  const TrainOptions& options = {});

// Mean loss over a batch. Example i draws its dropout mask from a generator
// seeded with (dropout_seed, i). When grads is given, the gradient of the
// mean is added to it; per-worker sums are reduced in worker order.
double batch_loss(const Model& model, std::span<const EncodedPair> batch,
                  Mode mode, std::uint64_t dropout_seed, Gradients* grads,
                  std::size_t threads = 1);

struct ModelGradCheck {
  GradCheckResult result;
  // Parallel to result.per_tensor.
  std::vector<std::string> names;
  std::vector<ParamGroup> groups;
};

// Compares the analytic gradient of the mean inference-mode loss over
// `pairs` with central differences for every trainable parameter.
ModelGradCheck check_model_gradients(Model& model,
                                     std::span<const EncodedPair> pairs,
                                     const GradCheckOptions& options = {});

// "epoch,train_loss,valid_metric,elapsed_seconds" rows.
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace kehnn

#endif  // KEHNN_TRAINER_H_
