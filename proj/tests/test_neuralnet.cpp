#include <cmath>

#include "doctest.h"
#include "psse/error.hpp"
#include "psse/neuralnet.hpp"
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

struct Case14 {
  GridModel grid;
  FormSet forms;
  StateVector truth;
};

Case14 make_case14() {
  Case14 c{load_case("case14"), {}, {}};
  c.forms = build_measurement_matrices(c.grid, default_plan(c.grid));
  c.truth = solve_power_flow(c.grid).state;
  return c;
}

// Measurements of a state drawn around the operating point.
Eigen::VectorXd random_measurement(const Case14& c, Rng& rng) {
  Eigen::VectorXd v = c.truth.values;
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.03 * rng.normal();
  return evaluate_measurements(c.forms, v);
}

// Central differences over every parameter entry, compared in the 2-norm.
template <class P, class GradFn>
double fd_relative_error(P& p, const Batch& z, const Batch& v, const LossConfig& loss, GradFn grad_fn,
                         double step = 1e-6) {
  P grad = zeros_like(p);
  grad_fn(p, z, v, loss, grad);
  P scratch = zeros_like(p);
  double diff = 0.0;
  double ref = 0.0;
  auto params = tensor_list(p);
  auto grads = tensor_list(grad);
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < params[t]->size(); ++i) {
      double& x = params[t]->data()[i];
      const double keep = x;
      x = keep + step;
      const double up = grad_fn(p, z, v, loss, scratch);
      x = keep - step;
      const double down = grad_fn(p, z, v, loss, scratch);
      x = keep;
      const double fd = (up - down) / (2.0 * step);
      const double an = grads[t]->data()[i];
      diff += (fd - an) * (fd - an);
      ref += an * an;
    }
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

// Smallest distance of any pre-activation to a kink of the activation.
double kink_margin(const ProxLinearNetParams& p, const Batch& z) {
  double margin = 1e300;
  Batch u = Batch::Zero(z.rows(), z.cols());
  for (int i = 0; i < p.blocks; ++i) {
    const double eta = p.thresholds[static_cast<std::size_t>(i)];
    for (int k = 0; k < p.layers; ++k) {
      const auto j = static_cast<std::size_t>(i * p.layers + k);
      Batch pre = p.w[j] * u + p.a[static_cast<std::size_t>(i)] * z;
      pre.colwise() += p.b[j].col(0);
      const double kink = p.activation == Activation::SoftThreshold ? eta : 0.0;
      margin = std::min(margin, ((pre.array().abs() - kink).abs()).minCoeff());
      activate(p.activation, eta, pre, u);
    }
  }
  return margin;
}

double fnn_kink_margin(const FnnParams& p, const Batch& z) {
  double margin = 1e300;
  Batch h = z;
  for (int l = 0; l < p.hidden_layers(); ++l) {
    const auto j = static_cast<std::size_t>(l);
    Batch pre = p.w[j] * h;
    pre.colwise() += p.b[j].col(0);
    margin = std::min(margin, pre.array().abs().minCoeff());
    activate(p.activation, p.threshold, pre, h);
  }
  return margin;
}

}  // namespace

TEST_CASE("activations and losses") {
  Batch x(1, 5);
  x << -2.0, -0.5, 0.0, 0.5, 2.0;
  Batch out;
  activate(Activation::SoftThreshold, 1.0, x, out);
  CHECK(out(0, 0) == -1.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 4) == 1.0);
  activate(Activation::Relu, 0.0, x, out);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 3) == 0.5);
  Batch g = Batch::Ones(1, 5);
  activation_backward(Activation::Relu, 0.0, x, g);
  CHECK(g(0, 2) == 0.0);  // subgradient 0 at the origin
  CHECK(g(0, 4) == 1.0);

  Batch pred(1, 2);
  pred << 0.5, 3.0;
  const Batch target = Batch::Zero(1, 2);
  // (0.125 + (3 - 0.5)) / 2
  CHECK(huber_loss(pred, target, 1.0) == doctest::Approx(1.3125).epsilon(1e-15));
  CHECK(mse_loss(pred, target) == doctest::Approx((0.125 + 4.5) / 2.0).epsilon(1e-15));
  const Batch hg = loss_gradient({LossKind::Huber, 1.0}, pred, target);
  CHECK(hg(0, 0) == 0.25);
  CHECK(hg(0, 1) == 0.5);
  CHECK_THROWS_AS(huber_loss(pred, target, 0.0), Error);
  CHECK_THROWS_AS(activation_from_name("tanh"), Error);
  CHECK(activation_from_name("soft_threshold") == Activation::SoftThreshold);
}

TEST_CASE("Adam update matches a hand-computed first step") {
  Tensor p(1, 2);
  p << 1.0, -1.0;
  Tensor g(1, 2);
  g << 0.5, -2.0;
  AdamState state;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  adam_update({&p}, {&g}, state, cfg);
  // Bias-corrected first step is lr * g / (|g| + eps').
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(-1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(state.step == 1);

  Tensor q = Tensor::Constant(2, 2, 3.0);
  const Tensor gq = Tensor::Constant(2, 2, 7.0);
  AdamState s2;
  cfg.learning_rate = 0.0;
  adam_update({&q}, {&gq}, s2, cfg);
  CHECK(q == Tensor::Constant(2, 2, 3.0));
}

TEST_CASE("zero parameters give a zero estimate") {
  ProxLinearNetParams p = init_proxlinear_random(6, 4, 2, 3, Activation::SoftThreshold, 1, 0.1);
  for (Tensor* t : tensor_list(p)) t->setZero();
  Rng rng(2);
  const Batch z = random_batch(6, 5, rng);
  CHECK(proxlinear_forward(p, z).isZero(0.0));

  FnnParams f = init_fnn(6, 6, 3, 4, Activation::Relu, 1);
  for (Tensor* t : tensor_list(f)) t->setZero();
  CHECK(fnn_forward(f, z).isZero(0.0));
}

TEST_CASE("parameter count closed form") {
  for (int blocks : {1, 2, 4}) {
    for (int layers : {1, 3}) {
      const ProxLinearNetParams p = init_proxlinear_random(7, 10, blocks, layers, Activation::Relu, 3);
      CHECK(parameter_count(p) == proxlinear_parameter_count(7, 10, blocks, layers));
      const auto m = 7u;
      const auto n = 10u;
      const auto bl = static_cast<std::size_t>(blocks);
      CHECK(parameter_count(p) == bl * m * m + bl * layers * (m * m + m) + 2 * n * m + n);
    }
  }
  const FnnParams f = init_fnn(5, 8, 6, 3, Activation::Relu, 1);
  CHECK(parameter_count(f) == (5 * 8 + 8) + 5 * (8 * 8 + 8) + (8 * 3 + 3));
  CHECK(f.hidden_layers() == 6);
}

TEST_CASE("tied network reproduces the prox-linear solver") {
  const Case14 c = make_case14();
  Rng rng(11);
  ProxLinearConfig cfg;
  cfg.outer_iters = 2;
  cfg.inner_iters = 3;
  cfg.reference = slack_reference(c.grid);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd z = random_measurement(c, rng);
    const ProxLinearNetParams p = init_proxlinear(c.forms, cfg, Activation::SoftThreshold, 0.0, 1, z);
    const Eigen::VectorXd net = proxlinear_forward(p, z);
    const Eigen::VectorXd alg = prox_linear_lav(c.forms, z, cfg).state.values;
    CHECK((net - alg).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("single-block tied network matches the solver for every input") {
  const Case14 c = make_case14();
  ProxLinearConfig cfg;
  cfg.outer_iters = 0;
  cfg.inner_iters = 5;
  cfg.reference = slack_reference(c.grid);
  cfg.max_backtracks = 0;
  const ProxLinearNetParams p = init_proxlinear(c.forms, cfg, Activation::SoftThreshold, 0.0, 1);
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd z = random_measurement(c, rng);
    const Eigen::VectorXd alg = prox_linear_lav(c.forms, z, cfg).state.values;
    CHECK((proxlinear_forward(p, z) - alg).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("tied first-layer bias") {
  const Case14 c = make_case14();
  ProxLinearConfig cfg;
  cfg.outer_iters = 0;
  cfg.reference = slack_reference(c.grid);
  const ProxLinearNetParams p = init_proxlinear(c.forms, cfg, Activation::SoftThreshold, 0.0, 1);
  cfg.keep_linearizations = true;
  const StateVector flat = StateVector::flat(14);
  const SolveResult r = prox_linear_lav(c.forms, evaluate_measurements(c.forms, flat), cfg);
  const Linearization& lin = r.trace.linearizations.front();
  const double m = static_cast<double>(c.forms.size());
  const Eigen::VectorXd expect = (lin.eta * m / (2.0 * lin.mu)) * lin.pinv.transpose() * lin.state;
  CHECK((Eigen::VectorXd(p.b[0].col(0)) - expect).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(p.thresholds[0] == lin.eta);
  CHECK((Eigen::MatrixXd(p.b_u) - 0.5 * lin.pinv).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perturbed tied init is seeded") {
  const Case14 c = make_case14();
  ProxLinearConfig cfg;
  cfg.reference = slack_reference(c.grid);
  const auto a = init_proxlinear(c.forms, cfg, Activation::Relu, 1e-3, 5);
  const auto b = init_proxlinear(c.forms, cfg, Activation::Relu, 1e-3, 5);
  const auto d = init_proxlinear(c.forms, cfg, Activation::Relu, 1e-3, 6);
  CHECK(a.a[0] == b.a[0]);
  CHECK(a.b_z == b.b_z);
  CHECK(a.a[0] != d.a[0]);
  CHECK_THROWS_AS(init_proxlinear(c.forms, cfg, Activation::Relu, -1.0, 5), Error);
}

TEST_CASE("prox-linear net gradients match finite differences") {
  Rng rng(21);
  for (auto act : {Activation::SoftThreshold, Activation::Relu}) {
    for (auto kind : {LossKind::Mse, LossKind::Huber}) {
      int checked = 0;
      for (std::uint64_t seed = 1; checked < 3 && seed < 50; ++seed) {
        ProxLinearNetParams p = init_proxlinear_random(6, 4, 2, 2, act, seed, 0.05);
        for (Tensor* t : tensor_list(p)) {
          for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += 0.1 * rng.normal();
        }
        const Batch z = random_batch(6, 3, rng);
        const Batch v = random_batch(4, 3, rng, kind == LossKind::Huber ? 2.0 : 1.0);
        if (kink_margin(p, z) < 1e-4) continue;
        ++checked;
        CHECK(fd_relative_error(p, z, v, {kind, 1.0}, proxlinear_grad) <= 1e-5);
      }
      CHECK(checked == 3);
    }
  }
}

TEST_CASE("FNN gradients match finite differences") {
  Rng rng(22);
  for (auto kind : {LossKind::Mse, LossKind::Huber}) {
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 3 && seed < 50; ++seed) {
      FnnParams p = init_fnn(5, 7, 3, 4, Activation::Relu, seed);
      for (Tensor& b : p.b) {
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.1 * rng.normal();
      }
      const Batch z = random_batch(5, 4, rng);
      const Batch v = random_batch(4, 4, rng, 2.0);
      if (fnn_kink_margin(p, z) < 1e-4) continue;
      ++checked;
      CHECK(fd_relative_error(p, z, v, {kind, 1.0}, fnn_grad) <= 1e-5);
    }
    CHECK(checked == 3);
  }
}

TEST_CASE("single affine layer MSE gradient") {
  Rng rng(23);
  FnnParams p = init_fnn(3, 0, 0, 2, Activation::Relu, 1);
  const Batch z = random_batch(3, 1, rng);
  const Batch v = random_batch(2, 1, rng);
  FnnParams g = zeros_like(p);
  fnn_grad(p, z, v, {}, g);
  const Eigen::VectorXd e = fnn_forward(p, Eigen::VectorXd(z.col(0))) - v.col(0);
  const Eigen::MatrixXd expect = e * z.col(0).transpose() / 2.0;
  CHECK((Eigen::MatrixXd(g.w[0]) - expect).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("training lowers the loss and is deterministic") {
  Rng rng(31);
  const Eigen::MatrixXd map = random_batch(3, 6, rng, 0.3);
  const Batch z = random_batch(6, 200, rng);
  const Batch v = map * z;

  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.adam.learning_rate = 1e-2;
  FnnParams a = init_fnn(6, 12, 1, 3, Activation::Relu, 4);
  FnnParams b = a;
  const TrainResult ra = train_estimator(a, z, v, cfg);
  const TrainResult rb = train_estimator(b, z, v, cfg);
  REQUIRE(ra.history.size() == 30);
  CHECK(ra.history.back() < 0.2 * ra.history.front());
  CHECK(ra.history == rb.history);
  CHECK(a.w[0] == b.w[0]);

  ProxLinearNetParams p = init_proxlinear_random(6, 3, 1, 2, Activation::Relu, 9);
  const TrainResult rp = train_estimator(p, z, v, cfg);
  CHECK(rp.history.back() < 0.2 * rp.history.front());

  TrainConfig frozen = cfg;
  frozen.adam.learning_rate = 0.0;
  FnnParams c = init_fnn(6, 12, 1, 3, Activation::Relu, 4);
  const FnnParams before = c;
  train_estimator(c, z, v, frozen);
  CHECK(c.w[0] == before.w[0]);
  CHECK(c.b[1] == before.b[1]);

  Batch bad = z;
  bad(0, 0) = std::nan("");
  FnnParams d = init_fnn(6, 12, 1, 3, Activation::Relu, 4);
  CHECK_THROWS_AS(train_estimator(d, bad, v, cfg), Error);
  CHECK_THROWS_AS(train_estimator(d, z, Batch(v.leftCols(10)), cfg), Error);
}

TEST_CASE("checkpoint round trip") {
  TrainConfig cfg;
  cfg.seed = 77;
  ProxLinearNetParams p = init_proxlinear_random(5, 4, 2, 2, Activation::SoftThreshold, 3, 0.2);
  const std::string text = checkpoint_json(p, cfg);
  CHECK(checkpoint_arch(text) == "proxnet");
  const ProxLinearNetParams q = proxlinear_from_checkpoint(text);
  CHECK(q.thresholds == p.thresholds);
  CHECK(q.activation == p.activation);
  for (std::size_t i = 0; i < p.w.size(); ++i) CHECK(q.w[i] == p.w[i]);
  CHECK(q.b_z == p.b_z);
  CHECK(checkpoint_json(q, cfg) == text);

  const FnnParams f = init_fnn(5, 6, 2, 4, Activation::Relu, 8);
  const std::string ft = checkpoint_json(f, cfg);
  const FnnParams g = fnn_from_checkpoint(ft);
  CHECK(checkpoint_json(g, cfg) == ft);

  CHECK_THROWS_AS(fnn_from_checkpoint(text), Error);
  CHECK_THROWS_AS(proxlinear_from_checkpoint("{\"schema\":\"other\"}"), Error);
  CHECK_THROWS_AS(proxlinear_from_checkpoint("not json"), Error);
}
