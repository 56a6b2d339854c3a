#include "psse/forecaster.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "checkpoint.hpp"
#include "psse/error.hpp"
#include "psse/rng.hpp"
#include "training.hpp"

namespace psse {

namespace {

constexpr double kVarRidge = 1e-8;

struct RnnTape {
  std::vector<std::vector<Batch>> pre;   // [tau][layer]
  std::vector<std::vector<Batch>> post;  // [tau][layer]
};

Batch rnn_run(const RnnParams& p, const std::vector<Batch>& steps, RnnTape* tape) {
  require_dims(static_cast<int>(steps.size()) == p.window, "window length vs RNN window");
  const auto layers = static_cast<std::size_t>(p.layers());
  const Eigen::Index cols = steps.front().cols();
  std::vector<Batch> hidden(layers);
  for (std::size_t l = 0; l < layers; ++l) hidden[l] = Batch::Zero(p.r_in[l].rows(), cols);
  if (tape) {
    tape->pre.assign(steps.size(), std::vector<Batch>(layers));
    tape->post.assign(steps.size(), std::vector<Batch>(layers));
  }
  for (std::size_t tau = 0; tau < steps.size(); ++tau) {
    require_dims(steps[tau].rows() == p.state_dim() && steps[tau].cols() == cols, "RNN input step shape");
    const Batch* below = &steps[tau];
    for (std::size_t l = 0; l < layers; ++l) {
      Batch pre = p.r_in[l] * *below;
      if (tau > 0) pre.noalias() += p.r_ss[l] * hidden[l];
      pre.colwise() += p.bias[l].col(0);
      activate(p.activation, 0.0, pre, hidden[l]);
      if (tape) {
        tape->pre[tau][l] = std::move(pre);
        tape->post[tau][l] = hidden[l];
      }
      below = &hidden[l];
    }
  }
  Batch out = p.r_out * hidden.back();
  out.colwise() += p.b_out.col(0);
  return out;
}

void fill_uniform(Tensor& t, double limit, Rng& rng) {
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
}

}  // namespace

void RnnParams::validate() const {
  require_dims(window >= 1, "RNN window must be >= 1");
  require_dims(!r_in.empty() && r_ss.size() == r_in.size() && bias.size() == r_in.size(), "RNN layer counts");
  require_dims(r_in.front().cols() == r_out.rows(), "RNN input width vs state dimension");
  for (std::size_t l = 0; l < r_in.size(); ++l) {
    const Eigen::Index w = r_in[l].rows();
    require_dims(r_ss[l].rows() == w && r_ss[l].cols() == w && bias[l].rows() == w && bias[l].cols() == 1,
                 "RNN layer shapes");
    if (l > 0) require_dims(r_in[l].cols() == r_in[l - 1].rows(), "RNN layer chaining");
  }
  require_dims(r_out.cols() == r_in.back().rows() && b_out.rows() == r_out.rows() && b_out.cols() == 1,
               "RNN output layer shapes");
}

RnnParams init_rnn(std::size_t state_dim, const std::vector<std::size_t>& widths, int window,
                   Activation activation, std::uint64_t seed) {
  require_dims(state_dim > 0 && !widths.empty() && window >= 1, "RNN sizes");
  RnnParams p;
  p.activation = activation;
  p.window = window;
  Rng rng(seed);
  auto below = static_cast<Eigen::Index>(state_dim);
  for (const std::size_t width : widths) {
    require_dims(width > 0, "RNN layer width");
    const auto w = static_cast<Eigen::Index>(width);
    const double limit = std::sqrt(6.0 / static_cast<double>(below + w));
    Tensor in(w, below);
    Tensor ss(w, w);
    fill_uniform(in, limit, rng);
    fill_uniform(ss, limit, rng);
    p.r_in.push_back(std::move(in));
    p.r_ss.push_back(std::move(ss));
    p.bias.push_back(Tensor::Zero(w, 1));
    below = w;
  }
  p.r_out = Tensor(static_cast<Eigen::Index>(state_dim), below);
  fill_uniform(p.r_out, std::sqrt(3.0 / static_cast<double>(below)), rng);
  p.b_out = Tensor::Zero(static_cast<Eigen::Index>(state_dim), 1);
  return p;
}

Batch rnn_forward(const RnnParams& p, const std::vector<Batch>& steps) { return rnn_run(p, steps, nullptr); }

Eigen::VectorXd rnn_forward(const RnnParams& p, const std::vector<Eigen::VectorXd>& window) {
  std::vector<Batch> steps(window.begin(), window.end());
  return rnn_run(p, steps, nullptr).col(0);
}

double rnn_grad(const RnnParams& p, const std::vector<Batch>& steps, const Batch& target,
                const LossConfig& loss, RnnParams& grad) {
  require_dims(!steps.empty() && steps.front().cols() > 0 && target.cols() == steps.front().cols(),
               "RNN batch inputs vs targets");
  RnnTape tape;
  const Batch pred = rnn_run(p, steps, &tape);
  const double value = loss_value(loss, pred, target);
  const Batch dy = loss_gradient(loss, pred, target);

  const int layers = p.layers();
  const int last = p.window - 1;
  grad.r_out = dy * tape.post[static_cast<std::size_t>(last)].back().transpose();
  grad.b_out = dy.rowwise().sum();
  for (int l = 0; l < layers; ++l) {
    grad.r_in[static_cast<std::size_t>(l)].setZero();
    grad.r_ss[static_cast<std::size_t>(l)].setZero();
    grad.bias[static_cast<std::size_t>(l)].setZero();
  }

  // carry[l]: gradient reaching s^l_tau from step tau + 1.
  std::vector<Batch> carry(static_cast<std::size_t>(layers));
  for (int tau = last; tau >= 0; --tau) {
    const auto t = static_cast<std::size_t>(tau);
    Batch down;
    for (int l = layers - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      Batch ds;
      if (l == layers - 1) {
        ds = tau == last ? Batch(p.r_out.transpose() * dy) : Batch::Zero(p.r_in[li].rows(), dy.cols());
      } else {
        ds = std::move(down);
      }
      if (tau < last) ds += carry[li];
      activation_backward(p.activation, 0.0, tape.pre[t][li], ds);
      const Batch& below = l == 0 ? steps[t] : tape.post[t][li - 1];
      grad.r_in[li].noalias() += ds * below.transpose();
      grad.bias[li] += ds.rowwise().sum();
      if (tau > 0) {
        grad.r_ss[li].noalias() += ds * tape.post[t - 1][li].transpose();
        carry[li] = p.r_ss[li].transpose() * ds;
      }
      if (l > 0) down = p.r_in[li].transpose() * ds;
    }
  }
  return value;
}

std::vector<Batch> WindowedSeries::steps(const std::vector<Eigen::Index>& idx) const {
  std::vector<Batch> out(static_cast<std::size_t>(window), Batch(inputs.rows(), static_cast<Eigen::Index>(idx.size())));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const Eigen::Index t = target_times[static_cast<std::size_t>(idx[c])];
    for (int tau = 0; tau < window; ++tau) {
      out[static_cast<std::size_t>(tau)].col(static_cast<Eigen::Index>(c)) = inputs.col(t - window + tau);
    }
  }
  return out;
}

std::vector<Batch> WindowedSeries::all_steps() const {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(count()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  return steps(idx);
}

Batch WindowedSeries::target_batch(const std::vector<Eigen::Index>& idx) const {
  Batch out(targets.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = targets.col(target_times[static_cast<std::size_t>(idx[c])]);
  }
  return out;
}

Batch WindowedSeries::all_targets() const {
  Batch out(targets.rows(), count());
  for (Eigen::Index c = 0; c < count(); ++c) out.col(c) = targets.col(target_times[static_cast<std::size_t>(c)]);
  return out;
}

Batch WindowedSeries::flattened() const {
  const Eigen::Index n = inputs.rows();
  Batch out(n * window, count());
  for (Eigen::Index c = 0; c < count(); ++c) {
    const Eigen::Index t = target_times[static_cast<std::size_t>(c)];
    for (int tau = 0; tau < window; ++tau) out.block(tau * n, c, n, 1) = inputs.col(t - window + tau);
  }
  return out;
}

WindowSplit make_window_dataset(const Eigen::MatrixXd& series, int window, Eigen::Index split) {
  return make_window_dataset(series, series, window, split);
}

WindowSplit make_window_dataset(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, int window,
                                Eigen::Index split) {
  require_dims(inputs.rows() == targets.rows() && inputs.cols() == targets.cols(),
               "input and target series shapes");
  if (window < 1) throw Error(Errc::InvalidArgument, "window length must be >= 1");
  const Eigen::Index total = inputs.cols();
  if (total <= window + 1) {
    throw Error(Errc::SeriesTooShort, "series of length " + std::to_string(total) + " with window " +
                                          std::to_string(window) + " needs more than " +
                                          std::to_string(window + 1) + " samples");
  }
  if (split < 0 || split > total) throw Error(Errc::InvalidArgument, "split index outside the series");
  WindowSplit out;
  for (WindowedSeries* w : {&out.train, &out.test}) {
    w->inputs = inputs;
    w->targets = targets;
    w->window = window;
  }
  for (Eigen::Index t = window; t < split; ++t) out.train.target_times.push_back(t);
  for (Eigen::Index t = split + window; t < total; ++t) out.test.target_times.push_back(t);
  return out;
}

RnnParams train_rnn(const WindowedSeries& data, const TrainConfig& cfg, const RnnArch& arch,
                    TrainResult* result, const EpochCallback& on_epoch) {
  const auto n = static_cast<std::size_t>(data.inputs.rows());
  const std::vector<std::size_t> widths = arch.widths.empty() ? std::vector<std::size_t>(3, n) : arch.widths;
  if (arch.window != data.window) throw Error(Errc::DimensionMismatch, "RNN window vs dataset window");
  RnnParams p = init_rnn(n, widths, arch.window, arch.activation, derive_seed(cfg.seed, 1));
  TrainResult r = detail::train_minibatch(
      p, data.count(), cfg,
      [&](const std::vector<Eigen::Index>& idx, RnnParams& grad) {
        return rnn_grad(p, data.steps(idx), data.target_batch(idx), cfg.loss, grad);
      },
      on_epoch);
  if (result) *result = std::move(r);
  return p;
}

std::string checkpoint_json(const RnnParams& p, const TrainConfig& cfg) {
  nlohmann::json j;
  j["schema"] = "ckpt/1";
  j["arch"] = "rnn";
  std::vector<Eigen::Index> widths;
  for (const auto& t : p.r_in) widths.push_back(t.rows());
  j["descriptor"] = {{"activation", activation_name(p.activation)},
                     {"window", p.window},
                     {"state_dim", p.state_dim()},
                     {"widths", widths}};
  j["tensors"] = detail::tensors_json(p);
  j["train_config"] = detail::train_config_json(cfg);
  j["seed"] = cfg.seed;
  return j.dump();
}

RnnParams rnn_from_checkpoint(std::string_view text) {
  const nlohmann::json j = detail::parse_checkpoint(text, "rnn");
  try {
    const auto& d = j.at("descriptor");
    std::vector<std::size_t> widths;
    for (const auto w : d.at("widths").get<std::vector<Eigen::Index>>()) {
      if (w <= 0) throw Error(Errc::SchemaMismatch, "RNN checkpoint has a non-positive width");
      widths.push_back(static_cast<std::size_t>(w));
    }
    const auto n = d.at("state_dim").get<Eigen::Index>();
    if (n <= 0 || widths.empty()) throw Error(Errc::SchemaMismatch, "RNN checkpoint descriptor is incomplete");
    RnnParams p = init_rnn(static_cast<std::size_t>(n), widths, d.at("window").get<int>(),
                           activation_from_name(d.at("activation").get<std::string>()), 0);
    detail::load_tensors(j.at("tensors"), p);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("RNN checkpoint: ") + e.what());
  }
}

VarParams var1_fit(const Eigen::MatrixXd& series, std::vector<std::string>* warnings) {
  const Eigen::Index n = series.rows();
  const Eigen::Index pairs = series.cols() - 1;
  if (pairs < 1) throw Error(Errc::SeriesTooShort, "VAR(1) needs at least two samples");
  Eigen::MatrixXd x(n + 1, pairs);
  x.topRows(n) = series.leftCols(pairs);
  x.row(n).setOnes();
  const Eigen::MatrixXd y = series.rightCols(pairs);
  Eigen::MatrixXd gram = x * x.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const double bottom = eig.eigenvalues().minCoeff();
  VarParams out;
  out.ridge = series.cols() < 2 * n + 2 || !(bottom > 1e-12 * top);
  if (out.ridge) {
    gram.diagonal().array() += kVarRidge;
    if (warnings) {
      warnings->push_back("IllConditioned: VAR(1) normal matrix (eigenvalues " + std::to_string(bottom) +
                          " .. " + std::to_string(top) + "); ridge 1e-8 applied");
    }
  }
  const Eigen::MatrixXd coef = gram.ldlt().solve(x * y.transpose()).transpose();
  out.transition = coef.leftCols(n);
  out.intercept = coef.col(n);
  if (!out.transition.allFinite() || !out.intercept.allFinite()) {
    throw Error(Errc::IllConditioned, "VAR(1) fit produced non-finite coefficients");
  }
  return out;
}

Eigen::VectorXd var1_predict(const VarParams& p, const Eigen::VectorXd& v) {
  require_dims(v.size() == p.transition.cols(), "state length vs VAR(1) dimension");
  return p.transition * v + p.intercept;
}

Batch var1_predict(const VarParams& p, const Batch& v) {
  require_dims(v.rows() == p.transition.cols(), "state length vs VAR(1) dimension");
  Batch out = p.transition * v;
  out.colwise() += p.intercept;
  return out;
}

FnnParams train_fnn_forecaster(const WindowedSeries& data, std::size_t width, const TrainConfig& cfg,
                               TrainResult* result) {
  const Batch inputs = data.flattened();
  const Batch targets = data.all_targets();
  FnnParams p = init_fnn(static_cast<std::size_t>(inputs.rows()), width, 1,
                         static_cast<std::size_t>(targets.rows()), Activation::Relu, derive_seed(cfg.seed, 1));
  TrainResult r = train_estimator(p, inputs, targets, cfg);
  if (result) *result = std::move(r);
  return p;
}

MeasurementVector impute_with_forecast(const MeasurementVector& z, const Eigen::VectorXd& forecast,
                                       const FormSet& forms) {
  require_dims(z.size() == forms.size(), "measurement vector vs plan size");
  require_dims(z.mask.empty() || z.mask.size() == z.size(), "mask length vs measurement count");
  MeasurementVector out = z;
  out.imputed.assign(z.size(), 0);
  if (z.mask.empty()) return out;
  const Eigen::VectorXd virtual_z = evaluate_measurements(forms, forecast);
  for (std::size_t m = 0; m < z.size(); ++m) {
    if (z.mask[m] == 0) {
      out.values[static_cast<Eigen::Index>(m)] = virtual_z[static_cast<Eigen::Index>(m)];
      out.imputed[m] = 1;
    }
  }
  return out;
}

}  // namespace psse
