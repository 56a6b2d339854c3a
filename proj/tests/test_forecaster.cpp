#include <cmath>

#include "doctest.h"
#include "psse/error.hpp"
#include "psse/forecaster.hpp"
#include "psse/rng.hpp"
#include "test_support.hpp"

using namespace psse;
using psse::testing::load_case;

namespace {

Batch random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Batch out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = scale * rng.normal();
  return out;
}

std::vector<Batch> random_steps(int window, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::vector<Batch> out;
  for (int t = 0; t < window; ++t) out.push_back(random_batch(rows, cols, rng));
  return out;
}

void randomize(RnnParams& p, Rng& rng, double scale) {
  for (Tensor* t : tensor_list(p)) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = scale * rng.normal();
  }
}

// Forward recursion for one window written with explicit loops over entries.
Eigen::VectorXd literal_forecast(const RnnParams& p, const std::vector<Eigen::VectorXd>& window) {
  const auto layers = static_cast<std::size_t>(p.layers());
  std::vector<Eigen::VectorXd> prev(layers);
  for (std::size_t l = 0; l < layers; ++l) prev[l] = Eigen::VectorXd::Zero(p.r_in[l].rows());
  for (const Eigen::VectorXd& v : window) {
    Eigen::VectorXd below = v;
    for (std::size_t l = 0; l < layers; ++l) {
      Eigen::VectorXd s(p.r_in[l].rows());
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        double acc = p.bias[l](i, 0);
        for (Eigen::Index j = 0; j < below.size(); ++j) acc += p.r_in[l](i, j) * below[j];
        for (Eigen::Index j = 0; j < s.size(); ++j) acc += p.r_ss[l](i, j) * prev[l][j];
        s[i] = std::max(acc, 0.0);
      }
      prev[l] = s;
      below = s;
    }
  }
  Eigen::VectorXd out(p.r_out.rows());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double acc = p.b_out(i, 0);
    for (Eigen::Index j = 0; j < prev.back().size(); ++j) acc += p.r_out(i, j) * prev.back()[j];
    out[i] = acc;
  }
  return out;
}

double kink_margin(const RnnParams& p, const std::vector<Batch>& steps) {
  double margin = 1e300;
  std::vector<Batch> hidden;
  for (const auto& t : p.r_in) hidden.push_back(Batch::Zero(t.rows(), steps.front().cols()));
  for (const Batch& x : steps) {
    Batch below = x;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      Batch pre = p.r_in[l] * below + p.r_ss[l] * hidden[l];
      pre.colwise() += p.bias[l].col(0);
      margin = std::min(margin, pre.array().abs().minCoeff());
      hidden[l] = pre.cwiseMax(0.0);
      below = hidden[l];
    }
  }
  return margin;
}

double rnn_fd_error(RnnParams& p, const std::vector<Batch>& steps, const Batch& target, const LossConfig& loss) {
  RnnParams grad = zeros_like(p);
  rnn_grad(p, steps, target, loss, grad);
  RnnParams scratch = zeros_like(p);
  auto params = tensor_list(p);
  auto grads = tensor_list(grad);
  double diff = 0.0;
  double ref = 0.0;
  const double h = 1e-6;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
      double& x = params[t]->data()[i];
      const double keep = x;
      x = keep + h;
      const double up = rnn_grad(p, steps, target, loss, scratch);
      x = keep - h;
      const double down = rnn_grad(p, steps, target, loss, scratch);
      x = keep;
      const double fd = (up - down) / (2.0 * h);
      diff += (fd - grads[t]->data()[i]) * (fd - grads[t]->data()[i]);
      ref += grads[t]->data()[i] * grads[t]->data()[i];
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

// Linear dynamics x_{t+1} = A x_t + c + noise, kept around 1 so ReLU units stay active.
Eigen::MatrixXd var_series(const Eigen::MatrixXd& a, const Eigen::VectorXd& c, Eigen::Index length,
                           double noise, Rng& rng) {
  Eigen::MatrixXd s(a.rows(), length);
  s.col(0) = Eigen::VectorXd::Ones(a.rows()) + 0.1 * random_batch(a.rows(), 1, rng).col(0);
  for (Eigen::Index t = 1; t < length; ++t) {
    s.col(t) = a * s.col(t - 1) + c + noise * random_batch(a.rows(), 1, rng).col(0);
  }
  return s;
}

}  // namespace

TEST_CASE("RNN forward oracles") {
  RnnParams zero = init_rnn(4, {5, 6}, 3, Activation::Relu, 1);
  for (Tensor* t : tensor_list(zero)) t->setZero();
  Rng rng(2);
  const std::vector<Batch> steps = random_steps(3, 4, 2, rng);
  CHECK(rnn_forward(zero, steps).isZero(0.0));

  RnnParams copy = init_rnn(4, {4}, 3, Activation::Identity, 1);
  copy.r_in[0].setIdentity();
  copy.r_ss[0].setZero();
  copy.r_out.setIdentity();
  const Batch out = rnn_forward(copy, steps);
  CHECK(out == steps.back());

  RnnParams p = init_rnn(4, {5, 3}, 3, Activation::Relu, 7);
  randomize(p, rng, 0.5);
  std::vector<Eigen::VectorXd> window;
  for (int t = 0; t < 3; ++t) window.push_back(random_batch(4, 1, rng).col(0));
  CHECK((rnn_forward(p, window) - literal_forecast(p, window)).cwiseAbs().maxCoeff() <= 1e-13);

  CHECK_THROWS_AS(rnn_forward(p, std::vector<Eigen::VectorXd>(2, Eigen::VectorXd::Zero(4))), Error);
  CHECK_THROWS_AS(rnn_forward(p, std::vector<Eigen::VectorXd>(3, Eigen::VectorXd::Zero(5))), Error);
}

TEST_CASE("BPTT gradients match finite differences") {
  Rng rng(3);
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 4 && seed < 100; ++seed) {
    RnnParams p = init_rnn(4, {5, 5, 5}, 10, Activation::Relu, seed);
    for (Tensor& b : p.bias) b = 0.1 * random_batch(b.rows(), 1, rng);
    for (Tensor& w : p.r_ss) w *= 0.5;
    const std::vector<Batch> steps = random_steps(10, 4, 3, rng);
    const Batch target = random_batch(4, 3, rng);
    if (kink_margin(p, steps) < 1e-4) continue;
    ++checked;
    const LossConfig loss{checked % 2 == 0 ? LossKind::Huber : LossKind::Mse, 0.5};
    CHECK(rnn_fd_error(p, steps, target, loss) <= 1e-5);
  }
  CHECK(checked == 4);
}

TEST_CASE("zero-error batch has zero gradient") {
  Rng rng(4);
  RnnParams p = init_rnn(3, {4, 4}, 4, Activation::Relu, 2);
  const std::vector<Batch> steps = random_steps(4, 3, 5, rng);
  const Batch target = rnn_forward(p, steps);
  RnnParams g = zeros_like(p);
  CHECK(rnn_grad(p, steps, target, {}, g) == 0.0);
  for (const Tensor* t : tensor_list(g)) CHECK(t->isZero(0.0));
}

TEST_CASE("window of one matches the feed-forward network") {
  Rng rng(5);
  RnnParams p = init_rnn(4, {6, 5}, 1, Activation::Relu, 3);
  for (Tensor& b : p.bias) b = 0.1 * random_batch(b.rows(), 1, rng);
  FnnParams f;
  f.activation = Activation::Relu;
  f.w = {p.r_in[0], p.r_in[1], p.r_out};
  f.b = {p.bias[0], p.bias[1], p.b_out};
  const Batch z = random_batch(4, 6, rng);
  const Batch v = random_batch(4, 6, rng);
  RnnParams gr = zeros_like(p);
  FnnParams gf = zeros_like(f);
  const double lr = rnn_grad(p, {z}, v, {}, gr);
  const double lf = fnn_grad(f, z, v, {}, gf);
  CHECK(lr == doctest::Approx(lf).epsilon(1e-14));
  CHECK((gr.r_in[0] - gf.w[0]).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((gr.r_in[1] - gf.w[1]).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((gr.r_out - gf.w[2]).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((gr.bias[1] - gf.b[1]).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(gr.r_ss[0].isZero(0.0));
}

TEST_CASE("forecasts are causal") {
  Rng rng(6);
  const Eigen::MatrixXd series = random_batch(4, 30, rng);
  const WindowSplit a = make_window_dataset(series, 5, 30);
  Eigen::MatrixXd later = series;
  later.rightCols(10) += random_batch(4, 10, rng);
  const WindowSplit b = make_window_dataset(later, 5, 30);
  const RnnParams p = init_rnn(4, {6}, 5, Activation::Relu, 1);
  // Windows predicting t <= 20 read inputs up to t - 1 <= 19.
  std::vector<Eigen::Index> idx;
  for (Eigen::Index c = 0; c < a.train.count(); ++c) {
    if (a.train.target_times[static_cast<std::size_t>(c)] <= 20) idx.push_back(c);
  }
  CHECK(idx.size() == 16);
  CHECK(rnn_forward(p, a.train.steps(idx)) == rnn_forward(p, b.train.steps(idx)));
}

TEST_CASE("window dataset counts and split hygiene") {
  Rng rng(7);
  const Eigen::MatrixXd tiny = random_batch(2, 12, rng);
  const WindowSplit t = make_window_dataset(tiny, 10, 12);
  CHECK(t.train.count() == 2);
  CHECK(t.test.count() == 0);
  CHECK_THROWS_AS(make_window_dataset(Eigen::MatrixXd::Zero(2, 11), 10, 11), Error);

  const Eigen::MatrixXd long_series = Eigen::MatrixXd::Zero(2, 7676);
  const WindowSplit w = make_window_dataset(long_series, 10, 6176);
  CHECK(w.train.count() == 6176 - 10);
  CHECK(w.test.count() == 7676 - 6176 - 10);
  for (const Eigen::Index time : w.train.target_times) CHECK(time < 6176);
  for (const Eigen::Index time : w.test.target_times) CHECK(time - 10 >= 6176);

  const WindowSplit s = make_window_dataset(tiny, 2, 6);
  const std::vector<Batch> steps = s.train.steps({0});
  CHECK(steps.size() == 2);
  CHECK(steps[0] == tiny.col(0));
  CHECK(steps[1] == tiny.col(1));
  CHECK(s.train.target_batch({0}) == tiny.col(2));
  const Batch flat = s.train.flattened();
  CHECK(flat.rows() == 4);
  CHECK(flat.block(2, 0, 2, 1) == tiny.col(1));
}

TEST_CASE("VAR(1) fit oracles") {
  Rng rng(8);
  Eigen::MatrixXd a(3, 3);
  a << 0.9, 0.2, 0.0, -0.2, 0.9, 0.1, 0.0, -0.1, 0.95;
  const Eigen::VectorXd c = Eigen::Vector3d(0.05, -0.02, 0.01);
  const Eigen::MatrixXd series = var_series(a, c, 60, 0.0, rng);
  std::vector<std::string> warnings;
  const VarParams fit = var1_fit(series, &warnings);
  CHECK_FALSE(fit.ridge);
  CHECK(warnings.empty());
  CHECK((fit.transition - a).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((fit.intercept - c).cwiseAbs().maxCoeff() <= 1e-8);
  for (Eigen::Index t = 0; t + 1 < series.cols(); ++t) {
    CHECK((var1_predict(fit, Eigen::VectorXd(series.col(t))) - series.col(t + 1)).cwiseAbs().maxCoeff() <= 1e-8);
  }

  const Eigen::MatrixXd constant = Eigen::Vector3d(1.0, -0.5, 0.25).replicate(1, 40);
  const VarParams cfit = var1_fit(constant, &warnings);
  CHECK(cfit.ridge);
  CHECK(warnings.size() == 1);
  CHECK((var1_predict(cfit, Eigen::VectorXd(constant.col(0))) - constant.col(0)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(var1_fit(Eigen::MatrixXd::Zero(3, 1)), Error);
}

TEST_CASE("RNN training on simple series") {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.adam.learning_rate = 1e-2;
  RnnArch arch;
  arch.widths = {6, 6};
  arch.window = 3;

  const Eigen::MatrixXd constant = Eigen::Vector4d(1.02, -0.1, 0.98, 0.05).replicate(1, 80);
  const WindowSplit cs = make_window_dataset(constant, 3, 80);
  TrainResult result;
  const RnnParams p = train_rnn(cs.train, cfg, arch, &result);
  CHECK(result.history.back() < 1e-8);
  const Batch pred = rnn_forward(p, cs.train.steps({0}));
  CHECK((pred - constant.col(0)).cwiseAbs().maxCoeff() <= 1e-4);

  const RnnParams q = train_rnn(cs.train, cfg, arch);
  CHECK(q.r_in[0] == p.r_in[0]);
  CHECK(q.b_out == p.b_out);
  CHECK(checkpoint_json(q, cfg) == checkpoint_json(p, cfg));
}

TEST_CASE("RNN emulates linear dynamics") {
  Rng rng(9);
  Eigen::MatrixXd a(4, 4);
  a << 0.8, 0.3, 0.0, 0.0, -0.3, 0.8, 0.0, 0.0, 0.0, 0.0, 0.7, 0.2, 0.0, 0.0, -0.2, 0.7;
  const Eigen::VectorXd c = (Eigen::MatrixXd::Identity(4, 4) - a) * Eigen::VectorXd::Ones(4);
  const Eigen::MatrixXd series = var_series(a, c, 600, 0.02, rng);
  const WindowSplit split = make_window_dataset(series, 1, 500);
  const VarParams var = var1_fit(series.leftCols(500));
  const Batch var_pred = var1_predict(var, Batch(split.test.all_steps().front()));
  const Batch truth = split.test.all_targets();
  const double var_rmse = (var_pred - truth).norm();

  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.adam.learning_rate = 3e-3;
  RnnArch arch;
  arch.widths = {8};
  arch.window = 1;
  const RnnParams p = train_rnn(split.train, cfg, arch);
  const double rnn_rmse = (rnn_forward(p, split.test.all_steps()) - truth).norm();
  MESSAGE("VAR(1) test error " << var_rmse << ", RNN " << rnn_rmse);
  CHECK(rnn_rmse <= 2.0 * var_rmse);
}

TEST_CASE("RNN checkpoint round trip") {
  TrainConfig cfg;
  const RnnParams p = init_rnn(4, {5, 3}, 4, Activation::Relu, 11);
  const std::string text = checkpoint_json(p, cfg);
  CHECK(checkpoint_arch(text) == "rnn");
  const RnnParams q = rnn_from_checkpoint(text);
  CHECK(q.window == 4);
  CHECK(checkpoint_json(q, cfg) == text);
  CHECK_THROWS_AS(proxlinear_from_checkpoint(text), Error);
}

TEST_CASE("forecast imputation") {
  const GridModel grid = load_case("case57");
  const MeasurementPlan plan = default_plan(grid);
  const FormSet forms = build_measurement_matrices(grid, plan);
  const StateVector truth = solve_power_flow(grid).state;
  const Eigen::VectorXd clean = evaluate_measurements(forms, truth);
  MeasurementVector z = add_gaussian_noise(clean, plan, 0.02, 0.01, 3);
  const Eigen::VectorXd forecast = StateVector::flat(57).values;

  z.mask.clear();
  const MeasurementVector same = impute_with_forecast(z, forecast, forms);
  CHECK(same.values == z.values);

  z.mask.assign(z.size(), 0);
  const MeasurementVector all = impute_with_forecast(z, forecast, forms);
  CHECK(all.values == evaluate_measurements(forms, forecast));

  Rng rng(10);
  z.mask.assign(z.size(), 1);
  std::size_t missing = 0;
  for (auto& m : z.mask) {
    if (rng.uniform() < 0.1) {
      m = 0;
      ++missing;
    }
  }
  REQUIRE(missing > 0);
  const MeasurementVector filled = impute_with_forecast(z, truth.values, forms);
  for (std::size_t m = 0; m < z.size(); ++m) {
    const auto i = static_cast<Eigen::Index>(m);
    if (z.mask[m] == 0) {
      CHECK(filled.values[i] == clean[i]);
      CHECK(filled.imputed[m] == 1);
    } else {
      CHECK(filled.values[i] == z.values[i]);
      CHECK(filled.imputed[m] == 0);
    }
  }
}
