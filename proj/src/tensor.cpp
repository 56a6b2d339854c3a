#include "psse/tensor.hpp"

#include <cmath>

#include "psse/error.hpp"

namespace psse {

std::string_view activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::SoftThreshold: return "soft_threshold";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "relu";
}

Activation activation_from_name(std::string_view name) {
  for (auto a : {Activation::SoftThreshold, Activation::Relu, Activation::Identity}) {
    if (activation_name(a) == name) return a;
  }
  throw Error(Errc::InvalidArgument, "unknown activation '" + std::string(name) + "'");
}

void activate(Activation a, double eta, const Batch& pre, Batch& out) {
  switch (a) {
    case Activation::SoftThreshold:
      out = pre.unaryExpr([eta](double x) { return x > eta ? x - eta : (x < -eta ? x + eta : 0.0); });
      return;
    case Activation::Relu:
      out = pre.cwiseMax(0.0);
      return;
    case Activation::Identity:
      out = pre;
      return;
  }
}

void activation_backward(Activation a, double eta, const Batch& pre, Batch& grad) {
  switch (a) {
    case Activation::SoftThreshold:
      grad = (pre.array().abs() > eta).select(grad, 0.0);
      return;
    case Activation::Relu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      return;
    case Activation::Identity:
      return;
  }
}

std::string_view loss_name(LossKind k) noexcept { return k == LossKind::Huber ? "huber" : "mse"; }

LossKind loss_from_name(std::string_view name) {
  if (name == "huber") return LossKind::Huber;
  if (name == "mse") return LossKind::Mse;
  throw Error(Errc::InvalidArgument, "unknown loss '" + std::string(name) + "'");
}

double huber_loss(const Batch& pred, const Batch& target, double delta) {
  require_dims(pred.rows() == target.rows() && pred.cols() == target.cols(), "loss operand shapes");
  if (!(delta > 0.0)) throw Error(Errc::InvalidArgument, "Huber delta must be positive");
  if (pred.size() == 0) return 0.0;
  const auto e = (pred - target).array().abs();
  const double total = (e <= delta).select(0.5 * e.square(), delta * e - 0.5 * delta * delta).sum();
  return total / static_cast<double>(pred.size());
}

double mse_loss(const Batch& pred, const Batch& target) {
  require_dims(pred.rows() == target.rows() && pred.cols() == target.cols(), "loss operand shapes");
  if (pred.size() == 0) return 0.0;
  return 0.5 * (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double loss_value(const LossConfig& cfg, const Batch& pred, const Batch& target) {
  return cfg.kind == LossKind::Huber ? huber_loss(pred, target, cfg.delta) : mse_loss(pred, target);
}

Batch loss_gradient(const LossConfig& cfg, const Batch& pred, const Batch& target) {
  require_dims(pred.rows() == target.rows() && pred.cols() == target.cols(), "loss operand shapes");
  const double scale = 1.0 / static_cast<double>(std::max<Eigen::Index>(pred.size(), 1));
  Batch e = pred - target;
  if (cfg.kind == LossKind::Huber) {
    const double d = cfg.delta;
    e = e.unaryExpr([d](double x) { return x > d ? d : (x < -d ? -d : x); });
  }
  return e * scale;
}

void adam_update(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                 AdamState& state, const AdamConfig& cfg) {
  require_dims(params.size() == grads.size(), "parameter / gradient tensor count");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::Zero(p->rows(), p->cols()));
      state.v.push_back(Tensor::Zero(p->rows(), p->cols()));
    }
  }
  require_dims(state.m.size() == params.size(), "Adam state vs parameter count");
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = *grads[i];
    require_dims(g.rows() == params[i]->rows() && g.cols() == params[i]->cols(), "gradient shape");
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    params[i]->array() -=
        cfg.learning_rate * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + cfg.epsilon);
  }
}

}  // namespace psse
