#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psse/forecaster.hpp"
#include "psse/neuralnet.hpp"
#include "psse/pipeline.hpp"
#include "psse/report.hpp"
#include "psse/solvers.hpp"

namespace psse {

/// "basic": every |V|^2 plus forwarding-end P/Q flows. "full": additionally
/// P/Q injections and receiving-end flows.
MeasurementPlan named_plan(const GridModel& grid, const std::string& name);

struct SyntheticDataSpec {
  Eigen::Index samples = 2500;
  LoadProfile profile = LoadProfile::SinusoidNoise;
  SynthOptions synth;
  NoiseConfig noise;
  std::string plan = "basic";
  std::uint64_t seed = 1;
};

/// Synthetic loads -> scaling -> power flow -> noisy measurements; the
/// provenance records everything needed to regenerate the dataset.
Dataset make_synthetic_dataset(const GridModel& grid, const SyntheticDataSpec& spec);

/// Adam 1e-3 decayed by 0.977 per epoch, 200 epochs, batches of 64.
TrainConfig study_train_config();

struct EstimatorSpec {
  std::string arch = "proxnet";  ///< "proxnet" or "fnn"
  int fnn_layers = 6;            ///< hidden layers of the FNN
  int outer_iters = 1;           ///< I; the net has I + 1 blocks
  int inner_iters = 3;           ///< K
  Activation activation = Activation::Relu;
  std::string init = "tied";     ///< "tied" (solver-derived) or "random"
  double perturb = 0.0;
  TrainConfig train = study_train_config();

  nlohmann::json to_json() const;
};

using EstimatorNet = std::variant<ProxLinearNetParams, FnnParams>;

struct TrainedEstimator {
  EstimatorNet net;
  TrainConfig train;
  TrainResult result;
};

/// Trains on the columns of `train`. The tied init unrolls the prox-linear solver at the
/// mean training measurement vector.
TrainedEstimator train_psse_model(const GridModel& grid, const Dataset& train, const EstimatorSpec& spec,
                                  const EpochCallback& on_epoch = {});
Batch estimate_batch(const EstimatorNet& net, const Batch& z);
Eigen::VectorXd estimate_one(const EstimatorNet& net, const Eigen::VectorXd& z);
std::string estimator_checkpoint(const TrainedEstimator& model);
EstimatorNet load_estimator(std::string_view text);

struct ForecastSpec {
  std::string arch = "rnn";  ///< "rnn", "var1" or "fnn2"
  int window = 10;
  std::vector<std::size_t> widths;  ///< RNN; empty: three layers of width 2N
  std::size_t fnn_width = 0;        ///< fnn2 hidden width; 0: 2N
  TrainConfig train = study_train_config();

  nlohmann::json to_json() const;
};

using ForecastModel = std::variant<RnnParams, VarParams, FnnParams>;

struct TrainedForecaster {
  ForecastModel model;
  int window = 1;
  TrainConfig train;
  TrainResult result;
  std::vector<std::string> warnings;
};

/// Fits on the windows of `series` (2N x T) that end before `split`.
TrainedForecaster train_forecaster(const Eigen::MatrixXd& series, Eigen::Index split, const ForecastSpec& spec);
/// Forecasts for every window of `windows`.
Batch forecast_windows(const TrainedForecaster& model, const WindowedSeries& windows);
/// One-step forecast from the last `window` columns of `history`.
Eigen::VectorXd forecast_next(const TrainedForecaster& model, const Eigen::MatrixXd& history);
std::string forecaster_checkpoint(const TrainedForecaster& model);
TrainedForecaster load_forecaster(std::string_view text);

struct MonitorSpec {
  double missing = 0.1;  ///< independent per-entry drop probability
  int trials = 100;
  int steps = 20;        ///< closed-loop steps per trial
  std::uint64_t seed = 1;
};

struct MonitorResult {
  std::vector<double> imputed_rmse;    ///< per trial, mean over steps
  std::vector<double> zero_fill_rmse;  ///< per trial, mean over steps
  int wins = 0;                        ///< trials where imputation is strictly better
};

/// Closed loop on the stream `data` (columns in time order): each trial
/// starts at a seeded offset, primes the forecaster with `window` fully
/// observed estimates, then repeats mask -> forecast -> impute -> estimate.
/// The baseline estimates from the same masked vector with zeros filled in.
MonitorResult run_monitor(const FormSet& forms, const Dataset& data, const EstimatorNet& estimator,
                          const TrainedForecaster& forecaster, const MonitorSpec& spec);

/// Per-sample Gauss-Newton (unit weights, flat start, slack reference) over
/// the columns of z; returns estimates and mean seconds per sample.
Batch gauss_newton_batch(const GridModel& grid, const FormSet& forms, const Batch& z, double* seconds_per_sample);

struct PsseBenchSpec {
  SyntheticDataSpec data;
  Eigen::Index train_count = 2000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> methods{"proxnet", "fnn6", "fnn8", "gauss-newton"};
  EstimatorSpec estimator;  ///< shared training settings; arch fields are set per method
  long export_instance = 100;
};

struct PsseBenchResult {
  RunReport report;
  /// Prox-net estimates over the whole dataset for the first seed (input to
  /// the forecasting study); empty if "proxnet" was not run.
  Eigen::MatrixXd proxnet_estimates;
  std::optional<EstimatorNet> proxnet;  ///< first-seed prox-linear net
  Dataset data;
};

PsseBenchResult run_psse_bench(const GridModel& grid, const PsseBenchSpec& spec,
                               const std::function<void(const std::string&)>& progress = {});

struct ForecastBenchSpec {
  Eigen::Index split = 2000;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  ForecastSpec rnn;
  std::size_t fnn_width = 0;
  long export_instance = 100;
};

/// RNN on ground truth, RNN on estimated voltages (estimated inputs and
/// training targets, scored against ground truth), fnn2 and VAR(1).
RunReport run_forecast_bench(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimates,
                             const ForecastBenchSpec& spec,
                             const std::function<void(const std::string&)>& progress = {});

}  // namespace psse
