#include "psse/experiments.hpp"

#include <chrono>
#include <cmath>

#include "checkpoint.hpp"
#include "psse/error.hpp"
#include "psse/rng.hpp"

namespace psse {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

nlohmann::json train_json(const TrainConfig& cfg) { return detail::train_config_json(cfg); }

// Tensor view of the VAR(1) coefficients for the shared checkpoint helpers.
struct VarTensors {
  Tensor transition;
  Tensor intercept;

  template <class F>
  void visit(F&& f) {
    f("A", transition);
    f("c", intercept);
  }
};

void progress_line(const std::function<void(const std::string&)>& progress, const std::string& line) {
  if (progress) progress(line);
}

}  // namespace

TrainConfig study_train_config() {
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.adam.learning_rate = 1e-3;
  cfg.lr_decay = 0.977;
  return cfg;
}

MeasurementPlan named_plan(const GridModel& grid, const std::string& name) {
  PlanOptions opts;
  if (name == "full") {
    opts.injections = true;
    opts.terminal_flows = true;
  } else if (name != "basic") {
    throw Error(Errc::InvalidArgument, "unknown measurement plan '" + name + "' (expected basic or full)");
  }
  return default_plan(grid, opts);
}

Dataset make_synthetic_dataset(const GridModel& grid, const SyntheticDataSpec& spec) {
  const MeasurementPlan plan = named_plan(grid, spec.plan);
  const LoadSeries raw = synth_load_series(grid, spec.samples, derive_seed(spec.seed, 0), spec.profile, spec.synth);
  Dataset data = generate_dataset(grid, scale_loads(raw, grid), plan, spec.noise, derive_seed(spec.seed, 1));
  data.seed = spec.seed;
  data.provenance = {{"source", "synthetic"},
                     {"profile", load_profile_name(spec.profile)},
                     {"amplitude", spec.synth.amplitude},
                     {"period", spec.synth.period},
                     {"noise_ratio", spec.synth.noise_ratio},
                     {"samples", spec.samples},
                     {"plan", spec.plan},
                     {"seed", spec.seed}};
  return data;
}

nlohmann::json EstimatorSpec::to_json() const {
  return {{"arch", arch},
          {"fnn_layers", fnn_layers},
          {"outer_iters", outer_iters},
          {"inner_iters", inner_iters},
          {"activation", activation_name(activation)},
          {"init", init},
          {"perturb", perturb},
          {"train", train_json(train)}};
}

TrainedEstimator train_psse_model(const GridModel& grid, const Dataset& train, const EstimatorSpec& spec,
                                  const EpochCallback& on_epoch) {
  train.validate();
  const auto m = static_cast<std::size_t>(train.z.rows());
  const auto n = static_cast<std::size_t>(train.v.rows());
  TrainedEstimator out;
  out.train = spec.train;
  if (spec.arch == "proxnet") {
    ProxLinearNetParams p;
    if (spec.init == "tied") {
      const FormSet forms = build_measurement_matrices(grid, train.plan);
      ProxLinearConfig cfg;
      cfg.outer_iters = spec.outer_iters;
      cfg.inner_iters = spec.inner_iters;
      cfg.reference = slack_reference(grid);
      const Eigen::VectorXd z_ref = train.z.rowwise().mean();
      p = init_proxlinear(forms, cfg, spec.activation, spec.perturb, derive_seed(spec.train.seed, 2), z_ref);
    } else if (spec.init == "random") {
      p = init_proxlinear_random(m, n, spec.outer_iters + 1, spec.inner_iters, spec.activation,
                                 derive_seed(spec.train.seed, 2));
    } else {
      throw Error(Errc::InvalidArgument, "unknown init '" + spec.init + "' (expected tied or random)");
    }
    out.result = train_estimator(p, train.z, train.v, spec.train, on_epoch);
    out.net = std::move(p);
  } else if (spec.arch == "fnn") {
    if (spec.fnn_layers < 1) throw Error(Errc::InvalidArgument, "FNN needs at least one hidden layer");
    FnnParams p = init_fnn(m, m, spec.fnn_layers, n, spec.activation, derive_seed(spec.train.seed, 2));
    out.result = train_estimator(p, train.z, train.v, spec.train, on_epoch);
    out.net = std::move(p);
  } else {
    throw Error(Errc::InvalidArgument, "unknown estimator '" + spec.arch + "' (expected proxnet or fnn)");
  }
  return out;
}

Batch estimate_batch(const EstimatorNet& net, const Batch& z) {
  return std::visit(Overloaded{[&](const ProxLinearNetParams& p) { return proxlinear_forward(p, z); },
                               [&](const FnnParams& p) { return fnn_forward(p, z); }},
                    net);
}

Eigen::VectorXd estimate_one(const EstimatorNet& net, const Eigen::VectorXd& z) {
  return std::visit(Overloaded{[&](const ProxLinearNetParams& p) { return proxlinear_forward(p, z); },
                               [&](const FnnParams& p) { return fnn_forward(p, z); }},
                    net);
}

std::string estimator_checkpoint(const TrainedEstimator& model) {
  return std::visit([&](const auto& p) { return checkpoint_json(p, model.train); }, model.net);
}

EstimatorNet load_estimator(std::string_view text) {
  const std::string arch = checkpoint_arch(text);
  if (arch == "proxnet") return proxlinear_from_checkpoint(text);
  if (arch == "fnn") return fnn_from_checkpoint(text);
  throw Error(Errc::SchemaMismatch, "checkpoint holds '" + arch + "', not a state estimator");
}

nlohmann::json ForecastSpec::to_json() const {
  return {{"arch", arch}, {"window", window}, {"widths", widths}, {"fnn_width", fnn_width}, {"train", train_json(train)}};
}

TrainedForecaster train_forecaster(const Eigen::MatrixXd& series, Eigen::Index split, const ForecastSpec& spec) {
  TrainedForecaster out;
  out.train = spec.train;
  const auto n = static_cast<std::size_t>(series.rows());
  if (spec.arch == "var1") {
    if (split < 2 || split > series.cols()) throw Error(Errc::SeriesTooShort, "VAR(1) needs two training samples");
    out.window = 1;
    out.model = var1_fit(series.leftCols(split), &out.warnings);
    return out;
  }
  const WindowSplit windows = make_window_dataset(series, spec.window, split);
  out.window = spec.window;
  if (spec.arch == "rnn") {
    RnnArch arch;
    arch.widths = spec.widths;
    arch.window = spec.window;
    out.model = train_rnn(windows.train, spec.train, arch, &out.result);
  } else if (spec.arch == "fnn2") {
    out.model = train_fnn_forecaster(windows.train, spec.fnn_width == 0 ? n : spec.fnn_width, spec.train, &out.result);
  } else {
    throw Error(Errc::InvalidArgument, "unknown forecaster '" + spec.arch + "' (expected rnn, var1 or fnn2)");
  }
  return out;
}

Batch forecast_windows(const TrainedForecaster& model, const WindowedSeries& windows) {
  return std::visit(
      Overloaded{[&](const RnnParams& p) {
                   require_dims(p.window == windows.window, "RNN window vs dataset window");
                   return rnn_forward(p, windows.all_steps());
                 },
                 [&](const VarParams& p) { return var1_predict(p, Batch(windows.all_steps().back())); },
                 [&](const FnnParams& p) {
                   require_dims(p.input_dim() == windows.window * windows.inputs.rows(), "fnn2 input width");
                   return fnn_forward(p, windows.flattened());
                 }},
      model.model);
}

Eigen::VectorXd forecast_next(const TrainedForecaster& model, const Eigen::MatrixXd& history) {
  require_dims(history.cols() >= model.window, "forecast history shorter than the window");
  const Eigen::MatrixXd recent = history.rightCols(model.window);
  return std::visit(Overloaded{[&](const RnnParams& p) {
                                 std::vector<Batch> steps;
                                 for (Eigen::Index t = 0; t < recent.cols(); ++t) steps.emplace_back(recent.col(t));
                                 return Eigen::VectorXd(rnn_forward(p, steps).col(0));
                               },
                               [&](const VarParams& p) { return var1_predict(p, Eigen::VectorXd(recent.col(0))); },
                               [&](const FnnParams& p) {
                                 const Eigen::VectorXd flat = recent.reshaped();
                                 return fnn_forward(p, flat);
                               }},
                    model.model);
}

std::string forecaster_checkpoint(const TrainedForecaster& model) {
  return std::visit(Overloaded{[&](const RnnParams& p) { return checkpoint_json(p, model.train); },
                               [&](const VarParams& p) {
                                 VarTensors t{p.transition, p.intercept};
                                 nlohmann::json j;
                                 j["schema"] = "ckpt/1";
                                 j["arch"] = "var1";
                                 j["descriptor"] = {{"state_dim", p.transition.rows()}, {"ridge", p.ridge}};
                                 j["tensors"] = detail::tensors_json(t);
                                 j["train_config"] = nlohmann::json::object();
                                 j["seed"] = 0;
                                 return j.dump();
                               },
                               [&](const FnnParams& p) {
                                 nlohmann::json j = nlohmann::json::parse(checkpoint_json(p, model.train));
                                 j["arch"] = "fnn2";
                                 j["descriptor"]["window"] = model.window;
                                 return j.dump();
                               }},
                    model.model);
}

TrainedForecaster load_forecaster(std::string_view text) {
  const std::string arch = checkpoint_arch(text);
  TrainedForecaster out;
  if (arch == "rnn") {
    RnnParams p = rnn_from_checkpoint(text);
    out.window = p.window;
    out.model = std::move(p);
    return out;
  }
  const nlohmann::json j = detail::parse_checkpoint(text, "");
  try {
    if (arch == "var1") {
      const auto n = j.at("descriptor").at("state_dim").get<Eigen::Index>();
      VarTensors t{Tensor::Zero(n, n), Tensor::Zero(n, 1)};
      detail::load_tensors(j.at("tensors"), t);
      out.window = 1;
      out.model = VarParams{t.transition, t.intercept.col(0), j.at("descriptor").at("ridge").get<bool>()};
      return out;
    }
    if (arch == "fnn2") {
      nlohmann::json as_fnn = j;
      as_fnn["arch"] = "fnn";
      out.window = j.at("descriptor").at("window").get<int>();
      out.model = fnn_from_checkpoint(as_fnn.dump());
      return out;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("forecaster checkpoint: ") + e.what());
  }
  throw Error(Errc::SchemaMismatch, "checkpoint holds '" + arch + "', not a forecaster");
}

MonitorResult run_monitor(const FormSet& forms, const Dataset& data, const EstimatorNet& estimator,
                          const TrainedForecaster& forecaster, const MonitorSpec& spec) {
  if (spec.missing < 0.0 || spec.missing > 1.0 || spec.trials < 0 || spec.steps < 1) {
    throw Error(Errc::InvalidArgument, "monitor settings out of range");
  }
  const Eigen::Index window = forecaster.window;
  const Eigen::Index span = window + spec.steps;
  if (data.count() < span) {
    throw Error(Errc::SeriesTooShort, "monitor stream of " + std::to_string(data.count()) + " samples needs " +
                                          std::to_string(span));
  }
  const auto m = data.z.rows();
  MonitorResult out;
  for (int trial = 0; trial < spec.trials; ++trial) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(trial)));
    const auto start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.count() - span + 1)));
    Eigen::MatrixXd history = estimate_batch(estimator, data.z.middleCols(start, window));
    double imputed = 0.0;
    double zero_fill = 0.0;
    for (Eigen::Index k = 0; k < spec.steps; ++k) {
      const Eigen::Index t = start + window + k;
      MeasurementVector z;
      z.values = data.z.col(t);
      z.mask.assign(static_cast<std::size_t>(m), 1);
      for (auto& flag : z.mask) flag = rng.uniform() < spec.missing ? 0 : 1;
      Eigen::VectorXd zeroed = z.values;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (z.mask[static_cast<std::size_t>(i)] == 0) zeroed[i] = 0.0;
      }
      const Eigen::VectorXd forecast = forecast_next(forecaster, history);
      const MeasurementVector completed = impute_with_forecast(z, forecast, forms);
      const Eigen::VectorXd v_loop = estimate_one(estimator, completed.values);
      const Eigen::VectorXd v_zero = estimate_one(estimator, zeroed);
      imputed += rmse(v_loop, data.v.col(t));
      zero_fill += rmse(v_zero, data.v.col(t));
      history.leftCols(window - 1) = history.rightCols(window - 1).eval();
      history.col(window - 1) = v_loop;
    }
    imputed /= static_cast<double>(spec.steps);
    zero_fill /= static_cast<double>(spec.steps);
    out.imputed_rmse.push_back(imputed);
    out.zero_fill_rmse.push_back(zero_fill);
    if (imputed < zero_fill) ++out.wins;
  }
  return out;
}

Batch gauss_newton_batch(const GridModel& grid, const FormSet& forms, const Batch& z, double* seconds_per_sample) {
  GaussNewtonConfig cfg;
  cfg.reference = slack_reference(grid);
  const Eigen::VectorXd weights = Eigen::VectorXd::Ones(z.rows());
  const StateVector flat = StateVector::flat(grid.bus_count());
  Batch out(static_cast<Eigen::Index>(grid.state_dim()), z.cols());
  const auto start = Clock::now();
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    out.col(c) = gauss_newton_wls(forms, z.col(c), weights, flat, cfg).state.values;
  }
  if (seconds_per_sample && z.cols() > 0) *seconds_per_sample = seconds_since(start) / static_cast<double>(z.cols());
  return out;
}

PsseBenchResult run_psse_bench(const GridModel& grid, const PsseBenchSpec& spec,
                               const std::function<void(const std::string&)>& progress) {
  PsseBenchResult out;
  out.data = make_synthetic_dataset(grid, spec.data);
  const Eigen::Index total = out.data.count();
  if (spec.train_count < 1 || spec.train_count >= total) {
    throw Error(Errc::InvalidArgument, "train count must leave a non-empty test split");
  }
  const Dataset train = out.data.slice(0, spec.train_count);
  const Dataset test = out.data.slice(spec.train_count, total - spec.train_count);
  const FormSet forms = build_measurement_matrices(grid, out.data.plan);
  const long export_instance = std::min<long>(spec.export_instance, static_cast<long>(test.count()) - 1);

  RunReport& report = out.report;
  report.command = "bench";
  report.seeds = spec.seeds;
  report.export_instance = export_instance;
  report.export_truth = test.v.col(export_instance);
  report.config = {{"samples", spec.data.samples},
                   {"train_count", spec.train_count},
                   {"plan", spec.data.plan},
                   {"profile", load_profile_name(spec.data.profile)},
                   {"noise", {{"sigma_flow", spec.data.noise.sigma_flow}, {"sigma_mag", spec.data.noise.sigma_mag}}},
                   {"data_seed", spec.data.seed},
                   {"estimator", spec.estimator.to_json()},
                   {"methods", spec.methods}};
  report.extra["grid_fingerprint"] = out.data.grid_fingerprint;
  report.extra["parameters"] = nlohmann::json::object();

  for (const std::string& method : spec.methods) {
    MethodMetrics metrics;
    metrics.name = method;
    if (method == "gauss-newton") {
      progress_line(progress, "gauss-newton on " + std::to_string(test.count()) + " test samples");
      const Batch est = gauss_newton_batch(grid, forms, test.z, &metrics.infer_seconds_per_sample);
      metrics.instance_rmse = column_rmse(est, test.v);
      metrics.rmse_runs.assign(spec.seeds.size(), metrics.instance_rmse.mean());
      metrics.export_estimate = est.col(export_instance);
      report.methods.push_back(std::move(metrics));
      continue;
    }
    EstimatorSpec es = spec.estimator;
    if (method == "proxnet") {
      es.arch = "proxnet";
    } else if (method.rfind("fnn", 0) == 0) {
      es.arch = "fnn";
      es.fnn_layers = std::stoi(method.substr(3));
    } else {
      throw Error(Errc::InvalidArgument, "unknown bench method '" + method + "'");
    }
    for (std::size_t r = 0; r < spec.seeds.size(); ++r) {
      es.train.seed = spec.seeds[r];
      progress_line(progress, method + " seed " + std::to_string(spec.seeds[r]));
      const TrainedEstimator model = train_psse_model(grid, train, es);
      metrics.train_seconds += model.result.seconds / static_cast<double>(spec.seeds.size());
      const Batch est = estimate_batch(model.net, test.z);
      const Eigen::VectorXd per = column_rmse(est, test.v);
      metrics.rmse_runs.push_back(per.mean());
      if (r == 0) {
        metrics.instance_rmse = per;
        metrics.export_estimate = est.col(export_instance);
        report.extra["parameters"][method] =
            std::visit([](const auto& p) { return parameter_count(p); }, model.net);
        const auto start = Clock::now();
        for (Eigen::Index c = 0; c < test.count(); ++c) estimate_one(model.net, test.z.col(c));
        metrics.infer_seconds_per_sample = seconds_since(start) / static_cast<double>(test.count());
        if (method == "proxnet") {
          out.proxnet_estimates = estimate_batch(model.net, out.data.z);
          out.proxnet = model.net;
        }
      }
      progress_line(progress, "  test rmse " + std::to_string(per.mean()));
    }
    report.methods.push_back(std::move(metrics));
  }
  return out;
}

RunReport run_forecast_bench(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimates,
                             const ForecastBenchSpec& spec,
                             const std::function<void(const std::string&)>& progress) {
  require_dims(truth.rows() == estimates.rows() && truth.cols() == estimates.cols(), "truth vs estimated series");
  const int window = spec.rnn.window;
  const WindowSplit on_truth = make_window_dataset(truth, window, spec.split);
  const WindowSplit on_estimates = make_window_dataset(estimates, truth, window, spec.split);
  const Batch targets = on_truth.test.all_targets();
  const long export_instance = std::min<long>(spec.export_instance, static_cast<long>(targets.cols()) - 1);

  RunReport report;
  report.command = "forecast-bench";
  report.seeds = spec.seeds;
  report.export_instance = export_instance;
  report.export_truth = targets.col(export_instance);
  report.config = {{"split", spec.split}, {"rnn", spec.rnn.to_json()}, {"fnn_width", spec.fnn_width}};

  auto add_run = [&](MethodMetrics& m, const Batch& pred, const TrainResult& result, bool first) {
    const Eigen::VectorXd per = column_rmse(pred, targets);
    m.rmse_runs.push_back(per.mean());
    m.train_seconds += result.seconds / static_cast<double>(spec.seeds.size());
    if (first) {
      m.instance_rmse = per;
      m.export_estimate = pred.col(export_instance);
    }
  };

  MethodMetrics rnn;
  MethodMetrics rnn_est;
  MethodMetrics fnn2;
  MethodMetrics var;
  rnn.name = "rnn";
  rnn_est.name = "rnn-estimated";
  fnn2.name = "fnn2";
  var.name = "var1";
  std::vector<std::string> warnings;
  for (std::size_t r = 0; r < spec.seeds.size(); ++r) {
    const bool first = r == 0;
    ForecastSpec fs = spec.rnn;
    fs.train.seed = spec.seeds[r];
    progress_line(progress, "rnn seed " + std::to_string(fs.train.seed));
    const TrainedForecaster a = train_forecaster(truth, spec.split, fs);
    add_run(rnn, forecast_windows(a, on_truth.test), a.result, first);
    progress_line(progress, "rnn-estimated seed " + std::to_string(fs.train.seed));
    const TrainedForecaster b = train_forecaster(estimates, spec.split, fs);
    add_run(rnn_est, forecast_windows(b, on_estimates.test), b.result, first);
    fs.arch = "fnn2";
    fs.fnn_width = spec.fnn_width;
    progress_line(progress, "fnn2 seed " + std::to_string(fs.train.seed));
    const TrainedForecaster c = train_forecaster(truth, spec.split, fs);
    add_run(fnn2, forecast_windows(c, on_truth.test), c.result, first);
    fs.arch = "var1";
    const TrainedForecaster d = train_forecaster(truth, spec.split, fs);
    // VAR(1) reads only the newest state of each window.
    add_run(var, forecast_windows(d, on_truth.test), d.result, first);
    if (first) warnings = d.warnings;
  }
  report.methods = {rnn, rnn_est, fnn2, var};
  report.extra["var1_warnings"] = warnings;
  return report;
}

}  // namespace psse
