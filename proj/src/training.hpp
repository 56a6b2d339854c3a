#pragma once

// Minibatch Adam loop shared by the estimators and the forecasters.

#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "psse/error.hpp"
#include "psse/neuralnet.hpp"
#include "psse/rng.hpp"

namespace psse::detail {

/// `batch_grad(indices, grad)` fills `grad` for the selected samples and
/// returns their mean loss.
template <class P, class BatchGrad>
TrainResult train_minibatch(P& params, Eigen::Index samples, const TrainConfig& cfg, BatchGrad batch_grad,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  if (samples == 0) throw Error(Errc::InvalidArgument, "empty training set");
  const auto start = std::chrono::steady_clock::now();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(cfg.seed);
  AdamState adam;
  AdamConfig adam_cfg = cfg.adam;
  P grad = zeros_like(params);
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(order));
    double total = 0.0;
    for (Eigen::Index first = 0; first < samples; first += cfg.batch_size) {
      const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, samples - first);
      const std::vector<Eigen::Index> idx(order.begin() + first, order.begin() + first + count);
      const double loss = batch_grad(idx, grad);
      if (!std::isfinite(loss)) {
        throw Error(Errc::NonFiniteLoss, "loss " + std::to_string(loss) + " at epoch " +
                                             std::to_string(epoch + 1) + ", batch starting at position " +
                                             std::to_string(first));
      }
      total += loss * static_cast<double>(count);
      adam_step(params, grad, adam, adam_cfg);
    }
    result.history.push_back(total / static_cast<double>(samples));
    if (on_epoch) on_epoch(epoch + 1, result.history.back());
    adam_cfg.learning_rate *= cfg.lr_decay;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace psse::detail
