#include "psse/neuralnet.hpp"

#include <cmath>

#include "checkpoint.hpp"
#include "training.hpp"
#include "psse/error.hpp"
#include "psse/rng.hpp"

namespace psse {

namespace {

struct Tape {
  std::vector<Batch> pre;   // per layer
  std::vector<Batch> post;  // per layer
};

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
}

Batch prox_forward(const ProxLinearNetParams& p, const Batch& z, Tape* tape) {
  require_dims(z.rows() == p.measurements(), "z length vs prox-linear net input");
  const int total = p.hidden_layers();
  if (tape) {
    tape->pre.resize(static_cast<std::size_t>(total));
    tape->post.resize(static_cast<std::size_t>(total));
  }
  Batch u = Batch::Zero(z.rows(), z.cols());
  Batch pre;
  for (int i = 0; i < p.blocks; ++i) {
    const Batch az = p.a[i] * z;
    const double eta = p.thresholds[static_cast<std::size_t>(i)];
    for (int k = 0; k < p.layers; ++k) {
      const auto j = static_cast<std::size_t>(i * p.layers + k);
      const Batch drive = az.colwise() + p.b[j].col(0);
      if (j == 0) {
        pre = drive;
      } else {
        pre = p.w[j] * u + drive;
      }
      activate(p.activation, eta, pre, u);
      if (tape) {
        tape->pre[j] = pre;
        tape->post[j] = u;
      }
    }
  }
  Batch v = p.b_u * u + p.b_z * z;
  v.colwise() += p.out_bias.col(0);
  return v;
}

Batch fnn_forward_tape(const FnnParams& p, const Batch& z, Tape* tape) {
  require_dims(z.rows() == p.input_dim(), "z length vs FNN input");
  const int hidden = p.hidden_layers();
  if (tape) {
    tape->pre.resize(static_cast<std::size_t>(hidden));
    tape->post.resize(static_cast<std::size_t>(hidden));
  }
  Batch h = z;
  for (int l = 0; l < hidden; ++l) {
    const auto j = static_cast<std::size_t>(l);
    Batch pre = p.w[j] * h;
    pre.colwise() += p.b[j].col(0);
    activate(p.activation, p.threshold, pre, h);
    if (tape) {
      tape->pre[j] = std::move(pre);
      tape->post[j] = h;
    }
  }
  Batch out = p.w.back() * h;
  out.colwise() += p.b.back().col(0);
  return out;
}

}  // namespace

void ProxLinearNetParams::validate() const {
  const auto nb = static_cast<std::size_t>(blocks);
  const auto nl = static_cast<std::size_t>(blocks * layers);
  require_dims(blocks >= 1 && layers >= 1, "prox-linear net needs at least one block and layer");
  require_dims(a.size() == nb && thresholds.size() == nb && w.size() == nl && b.size() == nl,
               "prox-linear net tensor counts");
  const Eigen::Index m = b_u.cols();
  const Eigen::Index n = b_u.rows();
  require_dims(b_z.rows() == n && b_z.cols() == m && out_bias.rows() == n && out_bias.cols() == 1,
               "prox-linear net output layer shapes");
  for (const auto& t : a) require_dims(t.rows() == m && t.cols() == m, "A_i shape");
  for (const auto& t : w) require_dims(t.rows() == m && t.cols() == m, "W_i^k shape");
  for (const auto& t : b) require_dims(t.rows() == m && t.cols() == 1, "b_i^k shape");
}

std::size_t proxlinear_parameter_count(std::size_t m, std::size_t state_dim, int blocks, int layers) {
  const auto nb = static_cast<std::size_t>(blocks);
  const auto nl = static_cast<std::size_t>(blocks * layers);
  return nb * m * m + nl * (m * m + m) + 2 * state_dim * m + state_dim;
}

ProxLinearNetParams init_proxlinear(const FormSet& forms, const ProxLinearConfig& cfg,
                                    Activation activation, double perturb, std::uint64_t seed,
                                    const std::optional<Eigen::VectorXd>& z_ref) {
  cfg.validate();
  if (perturb < 0.0) throw Error(Errc::InvalidArgument, "perturbation scale must be non-negative");
  const auto m = static_cast<Eigen::Index>(forms.size());
  const auto n = static_cast<Eigen::Index>(state_dim(forms));
  const StateVector v_init = cfg.init_state.value_or(StateVector::flat(static_cast<std::size_t>(n) / 2));
  const Eigen::VectorXd z = z_ref.value_or(evaluate_measurements(forms, v_init));
  require_dims(z.size() == m, "reference measurement length");

  ProxLinearConfig run = cfg;
  run.keep_linearizations = true;
  const SolveResult solved = prox_linear_lav(forms, z, run);
  const auto& lins = solved.trace.linearizations;

  ProxLinearNetParams p;
  p.blocks = cfg.outer_iters + 1;
  p.layers = cfg.inner_iters;
  p.activation = activation;
  const Tensor identity = Tensor::Identity(m, m);
  const Tensor zero_mm = Tensor::Zero(m, m);
  const Tensor zero_m = Tensor::Zero(m, 1);
  int last_accepted = -1;
  for (int i = 0; i < p.blocks; ++i) {
    const auto li = static_cast<std::size_t>(i);
    const bool live = li < lins.size() && !lins[li].held;
    if (live) {
      const IstaCoefficients c = ista_coefficients(lins[li].pinv, lins[li].state, lins[li].mu, lins[li].eta);
      p.a.push_back(c.a);
      p.thresholds.push_back(c.eta);
      for (int k = 0; k < p.layers; ++k) {
        p.w.push_back(c.w);
        p.b.push_back(c.b);
      }
      last_accepted = i;
    } else {
      p.a.push_back(zero_mm);
      p.thresholds.push_back(0.0);
      for (int k = 0; k < p.layers; ++k) {
        p.w.push_back(identity);
        p.b.push_back(zero_m);
      }
    }
  }
  if (last_accepted >= 0) {
    const Linearization& lin = lins[static_cast<std::size_t>(last_accepted)];
    p.b_u = 0.5 * lin.pinv;
    p.b_z = p.b_u;
    p.out_bias = 0.5 * lin.state;
  } else {
    p.b_u = Tensor::Zero(n, m);
    p.b_z = Tensor::Zero(n, m);
    p.out_bias = lins.empty() ? Tensor(v_init.values) : Tensor(lins.front().state);
  }

  if (perturb > 0.0) {
    Rng rng(seed);
    p.visit([&](const std::string&, Tensor& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += perturb * rng.normal();
    });
  }
  return p;
}

ProxLinearNetParams init_proxlinear_random(std::size_t m, std::size_t state_dim, int blocks,
                                           int layers, Activation activation, std::uint64_t seed,
                                           double threshold) {
  require_dims(blocks >= 1 && layers >= 1 && m > 0 && state_dim > 0, "prox-linear net sizes");
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(state_dim);
  ProxLinearNetParams p;
  p.blocks = blocks;
  p.layers = layers;
  p.activation = activation;
  p.thresholds.assign(static_cast<std::size_t>(blocks), threshold);
  p.a.assign(static_cast<std::size_t>(blocks), Tensor::Zero(mi, mi));
  p.w.assign(static_cast<std::size_t>(blocks * layers), Tensor::Zero(mi, mi));
  p.b.assign(static_cast<std::size_t>(blocks * layers), Tensor::Zero(mi, 1));
  p.b_u = Tensor::Zero(ni, mi);
  p.b_z = Tensor::Zero(ni, mi);
  p.out_bias = Tensor::Zero(ni, 1);
  Rng rng(seed);
  // Every hidden layer sees u and z, so the fan-in is 2M.
  const double hidden_limit = std::sqrt(6.0 / (2.0 * static_cast<double>(m)));
  const double out_limit = std::sqrt(3.0 / (2.0 * static_cast<double>(m)));
  p.visit([&](const std::string& name, Tensor& t) {
    if (name[0] == 'A' || name[0] == 'W') fill_uniform(t, hidden_limit, rng);
    if (name == "B_u" || name == "B_z") fill_uniform(t, out_limit, rng);
  });
  return p;
}

Batch proxlinear_forward(const ProxLinearNetParams& p, const Batch& z) { return prox_forward(p, z, nullptr); }

Eigen::VectorXd proxlinear_forward(const ProxLinearNetParams& p, const Eigen::VectorXd& z) {
  return prox_forward(p, Batch(z), nullptr).col(0);
}

double proxlinear_grad(const ProxLinearNetParams& p, const Batch& z, const Batch& v,
                       const LossConfig& loss, ProxLinearNetParams& grad) {
  require_dims(z.cols() == v.cols() && z.cols() > 0, "batch inputs vs targets");
  Tape tape;
  const Batch pred = prox_forward(p, z, &tape);
  const double value = loss_value(loss, pred, v);
  const Batch dv = loss_gradient(loss, pred, v);

  const int total = p.hidden_layers();
  const Batch& u_last = tape.post[static_cast<std::size_t>(total - 1)];
  grad.b_u = dv * u_last.transpose();
  grad.b_z = dv * z.transpose();
  grad.out_bias = dv.rowwise().sum();
  Batch du = p.b_u.transpose() * dv;
  for (int i = p.blocks - 1; i >= 0; --i) {
    const double eta = p.thresholds[static_cast<std::size_t>(i)];
    Batch block_sum = Batch::Zero(z.rows(), z.cols());
    for (int k = p.layers - 1; k >= 0; --k) {
      const auto j = static_cast<std::size_t>(i * p.layers + k);
      activation_backward(p.activation, eta, tape.pre[j], du);
      block_sum += du;
      grad.b[j] = du.rowwise().sum();
      if (j == 0) {
        grad.w[j].setZero();
      } else {
        grad.w[j] = du * tape.post[j - 1].transpose();
        du = p.w[j].transpose() * du;
      }
    }
    grad.a[static_cast<std::size_t>(i)] = block_sum * z.transpose();
  }
  return value;
}

void FnnParams::validate() const {
  require_dims(!w.empty() && w.size() == b.size(), "FNN layer counts");
  for (std::size_t l = 0; l < w.size(); ++l) {
    require_dims(b[l].rows() == w[l].rows() && b[l].cols() == 1, "FNN bias shape");
    if (l > 0) require_dims(w[l].cols() == w[l - 1].rows(), "FNN layer chaining");
  }
}

FnnParams init_fnn(std::size_t input, std::size_t width, int hidden_layers, std::size_t output,
                   Activation activation, std::uint64_t seed) {
  require_dims(hidden_layers >= 0 && input > 0 && output > 0 && (hidden_layers == 0 || width > 0),
               "FNN sizes");
  FnnParams p;
  p.activation = activation;
  Rng rng(seed);
  auto fan_in = static_cast<Eigen::Index>(input);
  for (int l = 0; l <= hidden_layers; ++l) {
    const bool out = l == hidden_layers;
    const auto rows = static_cast<Eigen::Index>(out ? output : width);
    Tensor wl(rows, fan_in);
    fill_uniform(wl, std::sqrt(3.0 / static_cast<double>(fan_in)), rng);
    p.w.push_back(std::move(wl));
    p.b.push_back(Tensor::Zero(rows, 1));
    fan_in = rows;
  }
  return p;
}

Batch fnn_forward(const FnnParams& p, const Batch& z) { return fnn_forward_tape(p, z, nullptr); }

Eigen::VectorXd fnn_forward(const FnnParams& p, const Eigen::VectorXd& z) {
  return fnn_forward_tape(p, Batch(z), nullptr).col(0);
}

double fnn_grad(const FnnParams& p, const Batch& z, const Batch& v, const LossConfig& loss,
                FnnParams& grad) {
  require_dims(z.cols() == v.cols() && z.cols() > 0, "batch inputs vs targets");
  Tape tape;
  const Batch pred = fnn_forward_tape(p, z, &tape);
  const double value = loss_value(loss, pred, v);
  Batch d = loss_gradient(loss, pred, v);
  const int hidden = p.hidden_layers();
  for (int l = hidden; l >= 0; --l) {
    const auto j = static_cast<std::size_t>(l);
    const Batch& input = l == 0 ? z : tape.post[j - 1];
    if (l < hidden) activation_backward(p.activation, p.threshold, tape.pre[j], d);
    grad.w[j] = d * input.transpose();
    grad.b[j] = d.rowwise().sum();
    if (l > 0) d = p.w[j].transpose() * d;
  }
  return value;
}

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw Error(Errc::InvalidArgument, "epochs and batch size must be positive");
  if (!(adam.learning_rate >= 0.0) || !(adam.epsilon > 0.0) || adam.beta1 < 0.0 || adam.beta1 >= 1.0 ||
      adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw Error(Errc::InvalidArgument, "Adam settings out of range");
  }
  if (!(lr_decay > 0.0) || lr_decay > 1.0) throw Error(Errc::InvalidArgument, "lr_decay must be in (0, 1]");
  if (loss.kind == LossKind::Huber && !(loss.delta > 0.0)) {
    throw Error(Errc::InvalidArgument, "Huber delta must be positive");
  }
}

TrainResult train_estimator(ProxLinearNetParams& params, const Batch& z, const Batch& v,
                            const TrainConfig& cfg, const EpochCallback& on_epoch) {
  params.validate();
  require_dims(z.cols() == v.cols(), "training inputs vs targets");
  return detail::train_minibatch(
      params, z.cols(), cfg,
      [&](const std::vector<Eigen::Index>& idx, ProxLinearNetParams& grad) {
        return proxlinear_grad(params, z(Eigen::all, idx), v(Eigen::all, idx), cfg.loss, grad);
      },
      on_epoch);
}

TrainResult train_estimator(FnnParams& params, const Batch& z, const Batch& v, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  params.validate();
  require_dims(z.cols() == v.cols(), "training inputs vs targets");
  return detail::train_minibatch(
      params, z.cols(), cfg,
      [&](const std::vector<Eigen::Index>& idx, FnnParams& grad) {
        return fnn_grad(params, z(Eigen::all, idx), v(Eigen::all, idx), cfg.loss, grad);
      },
      on_epoch);
}

std::string checkpoint_json(const ProxLinearNetParams& p, const TrainConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "ckpt/1";
  j["arch"] = "proxnet";
  j["descriptor"] = {{"blocks", p.blocks},
                     {"layers", p.layers},
                     {"activation", activation_name(p.activation)},
                     {"thresholds", p.thresholds},
                     {"measurements", p.measurements()},
                     {"state_dim", p.state_dim()}};
  j["tensors"] = detail::tensors_json(p);
  j["train_config"] = detail::train_config_json(cfg);
  j["seed"] = cfg.seed;
  return j.dump();
}

std::string checkpoint_json(const FnnParams& p, const TrainConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "ckpt/1";
  j["arch"] = "fnn";
  std::vector<Eigen::Index> widths;
  for (const auto& t : p.w) widths.push_back(t.rows());
  j["descriptor"] = {{"activation", activation_name(p.activation)},
                     {"threshold", p.threshold},
                     {"input", p.input_dim()},
                     {"widths", widths}};
  j["tensors"] = detail::tensors_json(p);
  j["train_config"] = detail::train_config_json(cfg);
  j["seed"] = cfg.seed;
  return j.dump();
}

std::string checkpoint_arch(std::string_view text) {
  return detail::parse_checkpoint(text, "").value("arch", "");
}

ProxLinearNetParams proxlinear_from_checkpoint(std::string_view text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "proxnet");
  try {
    const auto& d = j.at("descriptor");
    const auto m = d.at("measurements").get<Eigen::Index>();
    const auto n = d.at("state_dim").get<Eigen::Index>();
    ProxLinearNetParams p = init_proxlinear_random(static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                                                   d.at("blocks").get<int>(), d.at("layers").get<int>(),
                                                   activation_from_name(d.at("activation").get<std::string>()), 0);
    p.thresholds = d.at("thresholds").get<std::vector<double>>();
    detail::load_tensors(j.at("tensors"), p);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("prox-linear checkpoint: ") + e.what());
  }
}

FnnParams fnn_from_checkpoint(std::string_view text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "fnn");
  try {
    const auto& d = j.at("descriptor");
    FnnParams p;
    p.activation = activation_from_name(d.at("activation").get<std::string>());
    p.threshold = d.at("threshold").get<double>();
    auto fan_in = d.at("input").get<Eigen::Index>();
    for (const auto rows : d.at("widths").get<std::vector<Eigen::Index>>()) {
      p.w.push_back(Tensor::Zero(rows, fan_in));
      p.b.push_back(Tensor::Zero(rows, 1));
      fan_in = rows;
    }
    detail::load_tensors(j.at("tensors"), p);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("FNN checkpoint: ") + e.what());
  }
}

}  // namespace psse
