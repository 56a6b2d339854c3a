#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psse/measurement.hpp"
#include "psse/solvers.hpp"
#include "psse/tensor.hpp"

namespace psse {

/// Unrolled prox-linear estimator. Block i (0..I) holds A_i and K layers
/// (W_i^k, b_i^k); u starts at zero and every layer computes
/// u <- act(W u + A_i z + b), so z enters every layer. The output layer is
/// v = B_u u + B_z z + out_bias.
struct ProxLinearNetParams {
  int blocks = 0;  ///< I + 1
  int layers = 0;  ///< K
  Activation activation = Activation::Relu;
  std::vector<double> thresholds;  ///< per block; read by SoftThreshold only
  std::vector<Tensor> a;           ///< blocks, M x M
  std::vector<Tensor> w;           ///< blocks * layers, M x M, index i * K + k
  std::vector<Tensor> b;           ///< blocks * layers, M x 1
  Tensor b_u;                      ///< 2N x M
  Tensor b_z;                      ///< 2N x M
  Tensor out_bias;                 ///< 2N x 1

  Eigen::Index measurements() const noexcept { return b_u.cols(); }
  Eigen::Index state_dim() const noexcept { return b_u.rows(); }
  int hidden_layers() const noexcept { return blocks * layers; }
  void validate() const;

  template <class F>
  void visit(F&& f) {
    for (int i = 0; i < blocks; ++i) {
      f("A" + std::to_string(i), a[i]);
      for (int k = 0; k < layers; ++k) {
        const auto j = static_cast<std::size_t>(i * layers + k);
        f("W" + std::to_string(i) + "_" + std::to_string(k + 1), w[j]);
        f("b" + std::to_string(i) + "_" + std::to_string(k + 1), b[j]);
      }
    }
    f("B_u", b_u);
    f("B_z", b_z);
    f("out_bias", out_bias);
  }
};

/// Closed-form tally: (I+1) M^2 + (I+1) K (M^2 + M) + 2 (2N M) + 2N.
std::size_t proxlinear_parameter_count(std::size_t m, std::size_t state_dim, int blocks, int layers);

/// Tied initialization from the prox_linear_lav trajectory on `z_ref` (default
/// h(v_init), v_init = cfg.init_state or flat): every block gets the ISTA
/// coefficients of its linearization and the output layer reproduces the
/// recovery step, B_u = B_z = B_I / 2 and out_bias = v_I / 2. Blocks at
/// which the solver held its iterate become pass-through blocks (W = I,
/// A = 0, b = 0, threshold 0). A Gaussian perturbation of scale `perturb`
/// is then added to every trainable entry.
ProxLinearNetParams init_proxlinear(const FormSet& forms, const ProxLinearConfig& cfg,
                                    Activation activation, double perturb, std::uint64_t seed,
                                    const std::optional<Eigen::VectorXd>& z_ref = std::nullopt);

/// Fan-in scaled uniform initialization, biases zero.
ProxLinearNetParams init_proxlinear_random(std::size_t m, std::size_t state_dim, int blocks,
                                           int layers, Activation activation, std::uint64_t seed,
                                           double threshold = 0.0);

Batch proxlinear_forward(const ProxLinearNetParams& p, const Batch& z);
Eigen::VectorXd proxlinear_forward(const ProxLinearNetParams& p, const Eigen::VectorXd& z);

/// Mean batch loss; `grad` receives d loss / d params with the same layout.
double proxlinear_grad(const ProxLinearNetParams& p, const Batch& z, const Batch& v,
                       const LossConfig& loss, ProxLinearNetParams& grad);

/// Plain feed-forward baseline: hidden layers h <- act(W h + b) followed by
/// an affine output layer (the last entry of w / b).
struct FnnParams {
  Activation activation = Activation::Relu;
  double threshold = 0.0;
  std::vector<Tensor> w;
  std::vector<Tensor> b;

  int hidden_layers() const noexcept { return static_cast<int>(w.size()) - 1; }
  Eigen::Index input_dim() const noexcept { return w.empty() ? 0 : w.front().cols(); }
  Eigen::Index output_dim() const noexcept { return w.empty() ? 0 : w.back().rows(); }
  void validate() const;

  template <class F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < w.size(); ++l) {
      f("W" + std::to_string(l + 1), w[l]);
      f("b" + std::to_string(l + 1), b[l]);
    }
  }
};

FnnParams init_fnn(std::size_t input, std::size_t width, int hidden_layers, std::size_t output,
                   Activation activation, std::uint64_t seed);

Batch fnn_forward(const FnnParams& p, const Batch& z);
Eigen::VectorXd fnn_forward(const FnnParams& p, const Eigen::VectorXd& z);
double fnn_grad(const FnnParams& p, const Batch& z, const Batch& v, const LossConfig& loss,
                FnnParams& grad);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  LossConfig loss;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double lr_decay = 1.0;  ///< learning rate multiplier applied after every epoch

  void validate() const;
};

struct TrainResult {
  std::vector<double> history;  ///< mean training loss per epoch
  double seconds = 0.0;
};

/// Called after each epoch with (epoch, loss); may be empty.
using EpochCallback = std::function<void(int, double)>;

/// Minibatch Adam over the columns of (z, v) with a seeded shuffle per epoch.
/// Throws NonFiniteLoss with the epoch and batch position.
TrainResult train_estimator(ProxLinearNetParams& params, const Batch& z, const Batch& v,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = {});
TrainResult train_estimator(FnnParams& params, const Batch& z, const Batch& v,
                            const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// `ckpt/1` JSON: architecture tag and descriptor, one flat row-major array
/// per tensor, training-config echo and seed.
std::string checkpoint_json(const ProxLinearNetParams& p, const TrainConfig& cfg);
std::string checkpoint_json(const FnnParams& p, const TrainConfig& cfg);
/// Architecture tag of a checkpoint ("proxnet", "fnn", "rnn").
std::string checkpoint_arch(std::string_view text);
ProxLinearNetParams proxlinear_from_checkpoint(std::string_view text);
FnnParams fnn_from_checkpoint(std::string_view text);

}  // namespace psse
