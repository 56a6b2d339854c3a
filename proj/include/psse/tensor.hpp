#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace psse {

/// Dense row-major parameter storage; column vectors are rows x 1.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Samples are stored as columns of a column-major matrix.
using Batch = Eigen::MatrixXd;

enum class Activation { SoftThreshold, Relu, Identity };

std::string_view activation_name(Activation a) noexcept;
Activation activation_from_name(std::string_view name);

/// Element-wise activation; `eta` is only read by SoftThreshold.
void activate(Activation a, double eta, const Batch& pre, Batch& out);
/// Multiplies `grad` in place by the activation's derivative at `pre`. The
/// derivative is 0 at ReLU's origin and at |x| = eta.
void activation_backward(Activation a, double eta, const Batch& pre, Batch& grad);

enum class LossKind { Huber, Mse };

std::string_view loss_name(LossKind k) noexcept;
LossKind loss_from_name(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::Mse;
  double delta = 1.0;  ///< Huber transition point
};

/// Mean over entries of e^2/2 (|e| <= delta) or delta |e| - delta^2/2.
double huber_loss(const Batch& pred, const Batch& target, double delta);
/// Mean over entries of e^2/2.
double mse_loss(const Batch& pred, const Batch& target);
double loss_value(const LossConfig& cfg, const Batch& pred, const Batch& target);
/// d loss / d pred for the mean-over-entries losses above.
Batch loss_gradient(const LossConfig& cfg, const Batch& pred, const Batch& target);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update over matching parameter/gradient lists.
/// An empty state is sized on first use.
void adam_update(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                 AdamState& state, const AdamConfig& cfg);

/// Parameter structs expose `visit(f)` with f(name, tensor); these collect the
/// tensors in visiting order.
template <class P>
std::vector<Tensor*> tensor_list(P& p) {
  std::vector<Tensor*> out;
  p.visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::vector<const Tensor*> tensor_list(const P& p) {
  std::vector<const Tensor*> out;
  const_cast<P&>(p).visit([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  for (const Tensor* t : tensor_list(p)) n += static_cast<std::size_t>(t->size());
  return n;
}

/// Same structure as `p`, all entries zero.
template <class P>
P zeros_like(const P& p) {
  P out = p;
  for (Tensor* t : tensor_list(out)) t->setZero();
  return out;
}

template <class P>
void adam_step(P& params, const P& grads, AdamState& state, const AdamConfig& cfg) {
  adam_update(tensor_list(params), tensor_list(grads), state, cfg);
}

}  // namespace psse
