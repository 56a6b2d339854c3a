#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "psse/error.hpp"
#include "psse/experiments.hpp"
#include "psse/grid.hpp"
#include "psse/util.hpp"

namespace psse::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::uint64_t seed = 1;
  std::string out = ".";
  std::string config;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_config(in)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw UsageError("config sections are not supported: " + item.fullname());
    std::string flag = "--" + item.name;
    std::replace(flag.begin(), flag.end(), '_', '-');
    CLI::Option* op = sub->get_option_no_throw(flag);
    if (op == nullptr || item.name == "config") throw UsageError("unknown config key '" + item.name + "'");
    if (op->count() > 0) continue;
    op->add_result(item.inputs);
    op->run_callback();
  }
}

void require_flags(CLI::App* sub, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    if (sub->get_option(name)->count() == 0) throw UsageError(std::string(name) + " is required");
  }
}

struct TrainFlags {
  TrainConfig cfg = study_train_config();
  std::string loss = "mse";

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig out = cfg;
    out.loss.kind = loss_from_name(loss);
    out.seed = seed;
    out.validate();
    return out;
  }
};

struct ProxFlags {
  int outer_iters = 1;
  int inner_iters = 3;
  std::vector<double> mu;
  std::optional<double> eta;
  int max_backtracks = 20;
  int power_iterations = 20;
  double rank_tol = 1e-10;

  ProxLinearConfig resolve(const GridModel& grid) const {
    ProxLinearConfig cfg;
    cfg.outer_iters = outer_iters;
    cfg.inner_iters = inner_iters;
    cfg.mu = mu;
    cfg.eta = eta;
    cfg.max_backtracks = max_backtracks;
    cfg.power_iterations = power_iterations;
    cfg.rank_tol = rank_tol;
    cfg.reference = slack_reference(grid);
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  sub->add_option("--out", common.out, "Output directory")->capture_default_str();
  sub->add_option("--config", common.config, "TOML file with flag values; flags on the command line win");
}

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--epochs", t.cfg.epochs)->capture_default_str();
  sub->add_option("--batch-size", t.cfg.batch_size)->capture_default_str();
  sub->add_option("--loss", t.loss)->check(CLI::IsMember({"mse", "huber"}))->capture_default_str();
  sub->add_option("--huber-delta", t.cfg.loss.delta)->capture_default_str();
  sub->add_option("--lr", t.cfg.adam.learning_rate)->capture_default_str();
  sub->add_option("--beta1", t.cfg.adam.beta1)->capture_default_str();
  sub->add_option("--beta2", t.cfg.adam.beta2)->capture_default_str();
  sub->add_option("--adam-epsilon", t.cfg.adam.epsilon)->capture_default_str();
  sub->add_option("--lr-decay", t.cfg.lr_decay)->capture_default_str();
}

void add_prox_flags(CLI::App* sub, ProxFlags& p) {
  sub->add_option("--outer-iters", p.outer_iters, "Outer iterations I")->capture_default_str();
  sub->add_option("--inner-iters", p.inner_iters, "ISTA iterations K")->capture_default_str();
  sub->add_option("--mu", p.mu, "Proximal weights per outer iteration (default M/2)");
  sub->add_option("--eta", p.eta, "ISTA step (default from the power iteration)");
  sub->add_option("--max-backtracks", p.max_backtracks)->capture_default_str();
  sub->add_option("--power-iterations", p.power_iterations)->capture_default_str();
  sub->add_option("--rank-tol", p.rank_tol)->capture_default_str();
}

fs::path out_dir(const Common& common) {
  std::error_code ec;
  fs::create_directories(common.out, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + common.out + ": " + ec.message());
  return fs::path(common.out);
}

void check_fingerprint(const GridModel& grid, const Dataset& data) {
  if (grid_fingerprint(grid) != data.grid_fingerprint) {
    throw Error(Errc::InvalidArgument, "dataset was generated on a different grid");
  }
}

Eigen::Index resolve_count(Eigen::Index first, Eigen::Index count, const Dataset& data) {
  if (first < 0 || first >= data.count()) throw Error(Errc::InvalidArgument, "sample index out of range");
  if (count <= 0) return data.count() - first;
  if (first + count > data.count()) throw Error(Errc::InvalidArgument, "sample range exceeds the dataset");
  return count;
}

void print_error_json(std::string_view code, const std::string& message, int exit_code) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}, {"exit", exit_code}}.dump() << "\n";
}

std::string json_line(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace

int run_command(int argc, char** argv) {
  CLI::App app{"Power system state estimation with prox-linear nets and RNN forecasting", "psse"};
  app.require_subcommand(1);

  Common common;
  std::string case_path;
  std::string data_path;

  auto* parse_case = app.add_subcommand("parse-case", "Parse a MATPOWER case and write grid.json");
  parse_case->add_option("case", case_path, "MATPOWER .m file")->required();
  add_common(parse_case, common);

  auto* powerflow = app.add_subcommand("powerflow", "Solve the AC power flow of a case");
  powerflow->add_option("case", case_path, "MATPOWER .m or grid JSON")->required();
  PowerFlowOptions pf_opts;
  powerflow->add_option("--tol", pf_opts.tol)->capture_default_str();
  powerflow->add_option("--max-iter", pf_opts.max_iter)->capture_default_str();
  add_common(powerflow, common);

  auto* gen_data = app.add_subcommand("gen-data", "Generate a measurement/voltage dataset");
  SyntheticDataSpec synth;
  std::string profile = "sinusoid";
  std::string loads_csv;
  std::string column_map;
  int subsample = 1;
  gen_data->add_option("--case", case_path);
  gen_data->add_option("--samples", synth.samples)->capture_default_str();
  gen_data->add_option("--profile", profile)->check(CLI::IsMember({"sinusoid", "random-walk"}))->capture_default_str();
  gen_data->add_option("--amplitude", synth.synth.amplitude)->capture_default_str();
  gen_data->add_option("--period", synth.synth.period)->capture_default_str();
  gen_data->add_option("--noise-ratio", synth.synth.noise_ratio)->capture_default_str();
  gen_data->add_option("--plan", synth.plan)->check(CLI::IsMember({"basic", "full"}))->capture_default_str();
  gen_data->add_option("--sigma-flow", synth.noise.sigma_flow)->capture_default_str();
  gen_data->add_option("--sigma-mag", synth.noise.sigma_mag)->capture_default_str();
  gen_data->add_option("--loads", loads_csv, "Load CSV instead of a synthetic profile");
  gen_data->add_option("--column-map", column_map, "JSON object mapping CSV columns to bus ids")->needs("--loads");
  gen_data->add_option("--subsample", subsample)->capture_default_str();
  add_common(gen_data, common);

  auto* solve = app.add_subcommand("solve", "Run a model-based estimator on dataset samples");
  std::string method = "prox-linear";
  Eigen::Index first = 0;
  Eigen::Index count = 1;
  ProxFlags prox;
  ExactProxConfig exact;
  GaussNewtonConfig gn;
  solve->add_option("--case", case_path);
  solve->add_option("--data", data_path);
  solve->add_option("--method", method)
      ->check(CLI::IsMember({"prox-linear", "gauss-newton", "prox-linear-exact"}))
      ->capture_default_str();
  solve->add_option("--sample", first, "First sample")->capture_default_str();
  solve->add_option("--count", count, "Samples to solve (0: to the end)")->capture_default_str();
  add_prox_flags(solve, prox);
  solve->add_option("--exact-outer-iters", exact.outer_iters)->capture_default_str();
  solve->add_option("--exact-inner-iters", exact.inner_iters)->capture_default_str();
  solve->add_option("--gn-max-iter", gn.max_iter)->capture_default_str();
  solve->add_option("--gn-tol", gn.tol)->capture_default_str();
  add_common(solve, common);

  auto* train_psse = app.add_subcommand("train-psse", "Train a prox-linear net or an FNN estimator");
  EstimatorSpec est;
  TrainFlags train_flags;
  std::string activation = "relu";
  Eigen::Index train_count = 0;
  train_psse->add_option("--case", case_path);
  train_psse->add_option("--data", data_path);
  train_psse->add_option("--arch", est.arch)->check(CLI::IsMember({"proxnet", "fnn"}))->capture_default_str();
  train_psse->add_option("--train-count", train_count, "Leading samples used for training (0: all)")
      ->capture_default_str();
  train_psse->add_option("--fnn-layers", est.fnn_layers)->capture_default_str();
  train_psse->add_option("--outer-iters", est.outer_iters)->capture_default_str();
  train_psse->add_option("--inner-iters", est.inner_iters)->capture_default_str();
  train_psse->add_option("--activation", activation)
      ->check(CLI::IsMember({"relu", "soft-threshold", "identity"}))
      ->capture_default_str();
  train_psse->add_option("--init", est.init)->check(CLI::IsMember({"tied", "random"}))->capture_default_str();
  train_psse->add_option("--perturb", est.perturb)->capture_default_str();
  add_train_flags(train_psse, train_flags);
  add_common(train_psse, common);

  auto* eval_psse = app.add_subcommand("eval-psse", "Evaluate a trained estimator on dataset samples");
  std::string model_path;
  long export_instance = 0;
  bool with_gn = false;
  eval_psse->add_option("--model", model_path);
  eval_psse->add_option("--data", data_path);
  eval_psse->add_option("--case", case_path, "Needed for --gauss-newton");
  eval_psse->add_option("--from", first, "First test sample")->capture_default_str();
  eval_psse->add_option("--count", count, "Test samples (0: to the end)")->capture_default_str();
  eval_psse->add_option("--export-instance", export_instance)->capture_default_str();
  eval_psse->add_flag("--gauss-newton", with_gn, "Also evaluate the Gauss-Newton baseline")->needs("--case");
  add_common(eval_psse, common);

  auto* train_fc = app.add_subcommand("train-forecast", "Train a one-step voltage forecaster");
  ForecastSpec fspec;
  TrainFlags fc_flags;
  Eigen::Index split = 0;
  std::string estimator_path;
  train_fc->add_option("--data", data_path);
  train_fc->add_option("--arch", fspec.arch)->check(CLI::IsMember({"rnn", "var1", "fnn2"}))->capture_default_str();
  train_fc->add_option("--window", fspec.window)->capture_default_str();
  train_fc->add_option("--widths", fspec.widths, "RNN layer widths (default three of 2N)");
  train_fc->add_option("--fnn-width", fspec.fnn_width)->capture_default_str();
  train_fc->add_option("--split", split, "Training prefix length (0: all)")->capture_default_str();
  train_fc->add_option("--estimator", estimator_path, "Train on voltages estimated by this checkpoint");
  add_train_flags(train_fc, fc_flags);
  add_common(train_fc, common);

  auto* eval_fc = app.add_subcommand("eval-forecast", "Evaluate a forecaster on the test windows of a dataset");
  eval_fc->add_option("--model", model_path);
  eval_fc->add_option("--data", data_path);
  eval_fc->add_option("--split", split, "First target index of the test part");
  eval_fc->add_option("--estimator", estimator_path, "Feed voltages estimated by this checkpoint");
  eval_fc->add_option("--export-instance", export_instance)->capture_default_str();
  add_common(eval_fc, common);

  auto* monitor = app.add_subcommand("monitor", "Closed-loop estimation with forecast imputation");
  MonitorSpec mspec;
  std::string forecaster_path;
  monitor->add_option("--case", case_path);
  monitor->add_option("--data", data_path);
  monitor->add_option("--estimator", estimator_path);
  monitor->add_option("--forecaster", forecaster_path);
  monitor->add_option("--missing", mspec.missing, "Per-measurement drop probability")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  monitor->add_option("--trials", mspec.trials)->capture_default_str();
  monitor->add_option("--steps", mspec.steps)->capture_default_str();
  monitor->add_option("--from", first, "First sample of the stream")->capture_default_str();
  add_common(monitor, common);

  auto* bench = app.add_subcommand("bench", "Estimation and forecasting benchmarks");
  PsseBenchSpec pspec;
  ForecastBenchSpec fbench;
  std::string study = "all";
  std::string bench_profile = "sinusoid";
  TrainFlags bench_flags;
  bench->add_option("--case", case_path);
  bench->add_option("--study", study)->check(CLI::IsMember({"psse", "forecast", "all"}))->capture_default_str();
  bench->add_option("--samples", pspec.data.samples)->capture_default_str();
  bench->add_option("--profile", bench_profile)
      ->check(CLI::IsMember({"sinusoid", "random-walk"}))
      ->capture_default_str();
  bench->add_option("--plan", pspec.data.plan)->check(CLI::IsMember({"basic", "full"}))->capture_default_str();
  bench->add_option("--train-count", pspec.train_count)->capture_default_str();
  bench->add_option("--seeds", pspec.seeds, "Training seeds")->capture_default_str();
  bench->add_option("--methods", pspec.methods, "proxnet, fnnL, gauss-newton")->capture_default_str();
  bench->add_option("--outer-iters", pspec.estimator.outer_iters)->capture_default_str();
  bench->add_option("--inner-iters", pspec.estimator.inner_iters)->capture_default_str();
  bench->add_option("--window", fbench.rnn.window)->capture_default_str();
  bench->add_option("--export-instance", pspec.export_instance)->capture_default_str();
  add_train_flags(bench, bench_flags);
  add_common(bench, common);

  try {
    app.parse(argc, argv);
    CLI::App* active = app.get_subcommands().front();
    apply_config(active, common.config);
    if (active == gen_data) require_flags(gen_data, {"--case"});
    if (active == solve) require_flags(solve, {"--case", "--data"});
    if (active == train_psse) require_flags(train_psse, {"--case", "--data"});
    if (active == eval_psse) require_flags(eval_psse, {"--model", "--data"});
    if (active == train_fc) require_flags(train_fc, {"--data"});
    if (active == eval_fc) require_flags(eval_fc, {"--model", "--data", "--split"});
    if (active == monitor) require_flags(monitor, {"--case", "--data", "--estimator", "--forecaster"});
    if (active == bench) require_flags(bench, {"--case"});
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    print_error_json("UsageError", e.what(), 2);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << app.help() << "\n";
    print_error_json("UsageError", e.what(), 2);
    return 2;
  }

  try {
    if (parse_case->parsed()) {
      std::vector<std::string> warnings;
      const GridModel grid = load_matpower_case(case_path, &warnings);
      const fs::path dir = out_dir(common);
      write_text_file((dir / "grid.json").string(), grid_to_json(grid));
      for (const auto& w : warnings) std::cout << "warning: " << w << "\n";
      std::cout << grid.buses.size() << " buses, " << grid.branches.size() << " branches, fingerprint "
                << grid_fingerprint(grid) << "\n";
    } else if (powerflow->parsed()) {
      const GridModel grid = load_grid(case_path);
      const PowerFlowSolution sol = solve_power_flow(grid, pf_opts);
      nlohmann::json j{{"schema", "powerflow/1"},
                       {"iterations", sol.iterations},
                       {"mismatch", sol.mismatch},
                       {"state", std::vector<double>(sol.state.values.begin(), sol.state.values.end())}};
      write_text_file((out_dir(common) / "powerflow.json").string(), json_line(j));
      std::cout << "converged in " << sol.iterations << " iterations, mismatch " << format_double(sol.mismatch)
                << "\n";
    } else if (gen_data->parsed()) {
      const GridModel grid = load_grid(case_path);
      Dataset data;
      synth.seed = common.seed;
      synth.profile = load_profile_from_name(profile);
      if (loads_csv.empty()) {
        data = make_synthetic_dataset(grid, synth);
      } else {
        LoadColumnMap map;
        if (!column_map.empty()) {
          try {
            for (const auto& [col, buses] : nlohmann::json::parse(read_text_file(column_map)).items()) {
              map.emplace_back(col, buses.get<std::vector<int>>());
            }
          } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ColumnMapInvalid, std::string("column map: ") + e.what());
          }
        }
        const LoadSeries raw = ingest_load_csv(loads_csv, grid, map, "timestamp", subsample);
        data = generate_dataset(grid, scale_loads(raw, grid), named_plan(grid, synth.plan), synth.noise,
                                common.seed);
        data.provenance = {{"source", "csv"}, {"path", fs::path(loads_csv).filename().string()},
                           {"subsample", subsample}, {"plan", synth.plan}, {"seed", common.seed}};
      }
      save_dataset((out_dir(common) / "dataset.psse").string(), data);
      std::cout << data.count() << " samples, " << data.z.rows() << " measurements, state dim " << data.v.rows()
                << "\n";
    } else if (solve->parsed()) {
      const GridModel grid = load_grid(case_path);
      const Dataset data = load_dataset(data_path);
      check_fingerprint(grid, data);
      const FormSet forms = build_measurement_matrices(grid, data.plan);
      const Eigen::Index n = resolve_count(first, count, data);
      nlohmann::json samples = nlohmann::json::array();
      for (Eigen::Index k = first; k < first + n; ++k) {
        const Eigen::VectorXd z = data.z.col(k);
        SolveResult res;
        if (method == "prox-linear") {
          res = prox_linear_lav(forms, z, prox.resolve(grid));
        } else if (method == "prox-linear-exact") {
          exact.reference = slack_reference(grid);
          res = prox_linear_lav_exact(forms, z, exact);
        } else {
          gn.reference = slack_reference(grid);
          res = gauss_newton_wls(forms, z, Eigen::VectorXd::Ones(z.size()), StateVector::flat(grid.bus_count()),
                                 gn);
        }
        const double err = rmse(res.state.values, data.v.col(k));
        std::cout << "sample " << k << " rmse " << format_double(err) << "\n";
        samples.push_back({{"sample", k}, {"rmse", err}, {"trace", nlohmann::json::parse(trace_to_json(res.trace))}});
      }
      write_text_file((out_dir(common) / "solve.json").string(),
                      json_line({{"schema", "solve/1"}, {"method", method}, {"samples", samples}}));
    } else if (train_psse->parsed()) {
      const GridModel grid = load_grid(case_path);
      const Dataset data = load_dataset(data_path);
      check_fingerprint(grid, data);
      est.activation = activation_from_name(activation);
      est.train = train_flags.resolve(common.seed);
      const Eigen::Index n = resolve_count(0, train_count, data);
      const TrainedEstimator model = train_psse_model(grid, data.slice(0, n), est, [](int epoch, double loss) {
        std::cout << "epoch " << epoch << " loss " << format_double(loss) << "\n";
      });
      const fs::path dir = out_dir(common);
      write_text_file((dir / "model.ckpt.json").string(), estimator_checkpoint(model));
      RunReport report;
      report.command = "train-psse";
      report.seeds = {common.seed};
      report.config = est.to_json();
      report.config["train_count"] = n;
      report.extra["loss_history"] = model.result.history;
      report.artifacts = {"model.ckpt.json"};
      MethodMetrics m;
      m.name = est.arch;
      m.train_seconds = model.result.seconds;
      report.methods.push_back(m);
      emit_report(report, dir.string());
    } else if (eval_psse->parsed()) {
      const EstimatorNet net = load_estimator(read_text_file(model_path));
      const Dataset data = load_dataset(data_path);
      const Eigen::Index n = resolve_count(first, count, data);
      const Dataset test = data.slice(first, n);
      if (export_instance < 0 || export_instance >= n) throw Error(Errc::InvalidArgument, "export instance out of range");
      RunReport report;
      report.command = "eval-psse";
      report.seeds = {common.seed};
      report.config = {{"from", first}, {"count", n}};
      report.export_instance = export_instance;
      report.export_truth = test.v.col(export_instance);
      MethodMetrics m;
      m.name = std::holds_alternative<ProxLinearNetParams>(net) ? "proxnet" : "fnn";
      const auto start = std::chrono::steady_clock::now();
      for (Eigen::Index c = 0; c < n; ++c) estimate_one(net, test.z.col(c));
      m.infer_seconds_per_sample =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / static_cast<double>(n);
      const Batch estimates = estimate_batch(net, test.z);
      m.instance_rmse = column_rmse(estimates, test.v);
      m.rmse_runs = {m.instance_rmse.mean()};
      m.export_estimate = estimates.col(export_instance);
      report.methods.push_back(m);
      if (with_gn) {
        const GridModel grid = load_grid(case_path);
        check_fingerprint(grid, data);
        MethodMetrics g;
        g.name = "gauss-newton";
        const Batch gn_est =
            gauss_newton_batch(grid, build_measurement_matrices(grid, data.plan), test.z, &g.infer_seconds_per_sample);
        g.instance_rmse = column_rmse(gn_est, test.v);
        g.rmse_runs = {g.instance_rmse.mean()};
        g.export_estimate = gn_est.col(export_instance);
        report.methods.push_back(g);
      }
      for (const auto& r : report.methods) std::cout << r.name << " rmse " << format_double(r.rmse_mean()) << "\n";
      emit_report(report, out_dir(common).string());
    } else if (train_fc->parsed()) {
      const Dataset data = load_dataset(data_path);
      Eigen::MatrixXd series = data.v;
      if (!estimator_path.empty()) series = estimate_batch(load_estimator(read_text_file(estimator_path)), data.z);
      fspec.train = fc_flags.resolve(common.seed);
      const Eigen::Index s = split <= 0 ? series.cols() : split;
      const TrainedForecaster model = train_forecaster(series, s, fspec);
      for (const auto& w : model.warnings) std::cout << "warning: " << w << "\n";
      const fs::path dir = out_dir(common);
      write_text_file((dir / "forecaster.ckpt.json").string(), forecaster_checkpoint(model));
      RunReport report;
      report.command = "train-forecast";
      report.seeds = {common.seed};
      report.config = fspec.to_json();
      report.config["split"] = s;
      report.config["inputs"] = estimator_path.empty() ? "truth" : "estimates";
      report.extra["loss_history"] = model.result.history;
      report.extra["warnings"] = model.warnings;
      report.artifacts = {"forecaster.ckpt.json"};
      MethodMetrics m;
      m.name = fspec.arch;
      m.train_seconds = model.result.seconds;
      report.methods.push_back(m);
      emit_report(report, dir.string());
    } else if (eval_fc->parsed()) {
      const TrainedForecaster model = load_forecaster(read_text_file(model_path));
      const Dataset data = load_dataset(data_path);
      Eigen::MatrixXd inputs = data.v;
      if (!estimator_path.empty()) inputs = estimate_batch(load_estimator(read_text_file(estimator_path)), data.z);
      const WindowSplit windows = make_window_dataset(inputs, data.v, model.window, split);
      const Batch targets = windows.test.all_targets();
      if (targets.cols() == 0) throw Error(Errc::SeriesTooShort, "no test windows after the split");
      if (export_instance < 0 || export_instance >= targets.cols()) {
        throw Error(Errc::InvalidArgument, "export instance out of range");
      }
      const Batch pred = forecast_windows(model, windows.test);
      RunReport report;
      report.command = "eval-forecast";
      report.seeds = {common.seed};
      report.config = {{"split", split}, {"window", model.window},
                       {"inputs", estimator_path.empty() ? "truth" : "estimates"}};
      report.export_instance = export_instance;
      report.export_truth = targets.col(export_instance);
      MethodMetrics m;
      m.name = std::visit([](const auto& p) -> std::string {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RnnParams>) return "rnn";
        else if constexpr (std::is_same_v<T, VarParams>) return "var1";
        else return "fnn2";
      }, model.model);
      m.instance_rmse = column_rmse(pred, targets);
      m.rmse_runs = {m.instance_rmse.mean()};
      m.export_estimate = pred.col(export_instance);
      report.methods.push_back(m);
      std::cout << m.name << " rmse " << format_double(m.rmse_mean()) << "\n";
      emit_report(report, out_dir(common).string());
    } else if (monitor->parsed()) {
      const GridModel grid = load_grid(case_path);
      const Dataset data = load_dataset(data_path);
      check_fingerprint(grid, data);
      const Dataset stream = data.slice(first, resolve_count(first, 0, data));
      mspec.seed = common.seed;
      const MonitorResult res = run_monitor(build_measurement_matrices(grid, data.plan), stream,
                                            load_estimator(read_text_file(estimator_path)),
                                            load_forecaster(read_text_file(forecaster_path)), mspec);
      RunReport report;
      report.command = "monitor";
      report.seeds = {common.seed};
      report.config = {{"missing", mspec.missing}, {"trials", mspec.trials}, {"steps", mspec.steps}, {"from", first}};
      MethodMetrics imputed;
      imputed.name = "forecast-imputation";
      imputed.rmse_runs = res.imputed_rmse;
      imputed.instance_rmse = Eigen::Map<const Eigen::VectorXd>(res.imputed_rmse.data(),
                                                                static_cast<Eigen::Index>(res.imputed_rmse.size()));
      MethodMetrics zero;
      zero.name = "zero-fill";
      zero.rmse_runs = res.zero_fill_rmse;
      zero.instance_rmse = Eigen::Map<const Eigen::VectorXd>(res.zero_fill_rmse.data(),
                                                             static_cast<Eigen::Index>(res.zero_fill_rmse.size()));
      report.methods = {imputed, zero};
      report.extra["wins"] = res.wins;
      std::cout << "imputation better in " << res.wins << " of " << mspec.trials << " trials\n";
      emit_report(report, out_dir(common).string());
    } else if (bench->parsed()) {
      const GridModel grid = load_grid(case_path);
      pspec.data.seed = common.seed;
      pspec.data.profile = load_profile_from_name(bench_profile);
      pspec.estimator.train = bench_flags.resolve(common.seed);
      if (study == "forecast") pspec.methods = {"proxnet"};
      if (study == "all" && std::find(pspec.methods.begin(), pspec.methods.end(), "proxnet") == pspec.methods.end()) {
        throw Error(Errc::InvalidArgument, "the forecasting study needs proxnet among the methods");
      }
      auto progress = [](const std::string& line) { std::cout << line << "\n" << std::flush; };
      const PsseBenchResult psse_res = run_psse_bench(grid, pspec, progress);
      const fs::path dir = out_dir(common);
      if (study != "forecast") emit_report(psse_res.report, (dir / "psse").string());
      if (study != "psse") {
        fbench.split = pspec.train_count;
        fbench.seeds = pspec.seeds;
        fbench.rnn.train = pspec.estimator.train;
        fbench.export_instance = pspec.export_instance;
        RunReport fr = run_forecast_bench(psse_res.data.v, psse_res.proxnet_estimates, fbench, progress);
        fr.config["data"] = psse_res.report.config;
        emit_report(fr, (dir / "forecast").string());
      }
      for (const auto& r : psse_res.report.methods) {
        std::cout << r.name << " rmse " << format_double(r.rmse_mean()) << " +- " << format_double(r.rmse_std())
                  << "\n";
      }
    }
  } catch (const Error& e) {
    print_error_json(errc_name(e.code()), e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    print_error_json("InternalError", e.what(), 1);
    return 1;
  }
  return 0;
}

}  // namespace psse::cli
