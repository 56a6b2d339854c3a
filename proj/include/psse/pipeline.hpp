#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "psse/grid.hpp"
#include "psse/measurement.hpp"

namespace psse {

enum class LoadSource { Synthetic, Csv };

std::string_view load_source_name(LoadSource s) noexcept;

/// Per-bus demand over time. Rows are time steps, columns follow `buses`
/// (internal 0-based indices). `reactive` is empty until scale_loads fills it.
struct LoadSeries {
  std::vector<double> time;
  std::vector<std::size_t> buses;
  Eigen::MatrixXd active;    ///< T x buses; multipliers or per-unit demand
  Eigen::MatrixXd reactive;  ///< T x buses; per-unit, absolute series only
  bool absolute = false;
  LoadSource source = LoadSource::Synthetic;

  Eigen::Index length() const noexcept { return active.rows(); }
  /// Strictly increasing time, non-negative active demand, consistent shapes.
  void validate() const;
};

/// CSV column name and the external bus ids it drives.
using LoadColumnMap = std::vector<std::pair<std::string, std::vector<int>>>;

/// Reads a headered CSV with a numeric timestamp column and keeps every
/// `subsample`-th row starting at row 0. Each mapped column becomes one
/// series column per listed bus, in map order. Throws ParseError and
/// ColumnMapInvalid.
LoadSeries ingest_load_csv(const std::string& path, const GridModel& grid, const LoadColumnMap& map,
                           const std::string& time_column = "timestamp", int subsample = 1);
void write_load_csv(const std::string& path, const LoadSeries& series, const GridModel& grid,
                    const std::string& time_column = "timestamp");

enum class LoadProfile { SinusoidNoise, RandomWalk };

std::string_view load_profile_name(LoadProfile p) noexcept;
LoadProfile load_profile_from_name(std::string_view name);

struct SynthOptions {
  double amplitude = 0.1;     ///< sinusoid amplitude; random-walk step is amplitude / 20
  double period = 24.0;       ///< samples per sinusoid cycle
  double noise_ratio = 0.2;   ///< white noise sigma relative to the amplitude
};

/// Multipliers around 1.0 for every bus with non-zero nominal demand.
/// Sinusoid+noise: 1 + a sin(2 pi t / P + phase_b) + 0.2 a g_t with a random
/// phase per bus. Random walk: cumulative Gaussian steps of a / 20, floored at 0.
LoadSeries synth_load_series(const GridModel& grid, Eigen::Index length, std::uint64_t seed,
                             LoadProfile profile, const SynthOptions& opts = {});

/// Rescales each column so its mean equals the bus's nominal Pd; Qd follows
/// with the nominal Q/P ratio. A constant column maps to the nominal demand.
/// Throws DegenerateSeries for a column with zero mean and non-zero spread.
LoadSeries scale_loads(const LoadSeries& series, const GridModel& grid);

struct NoiseConfig {
  double sigma_flow = 0.02;  ///< every non-|V|^2 channel
  double sigma_mag = 0.01;   ///< |V|^2 channel
};

/// Samples are columns. mask(m, t) = 1 marks an available measurement.
struct Dataset {
  std::vector<double> time;
  Eigen::MatrixXd z;  ///< M x T
  Eigen::MatrixXd v;  ///< 2N x T
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;
  MeasurementPlan plan;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  std::string grid_fingerprint;
  nlohmann::json provenance = nlohmann::json::object();

  Eigen::Index count() const noexcept { return z.cols(); }
  void validate() const;
  /// Contiguous block [first, first + count).
  Dataset slice(Eigen::Index first, Eigen::Index count) const;
};

/// Per step: power flow at the scaled demand, clean h(v_t), then Gaussian
/// noise seeded by derive_seed(seed, t). Throws Diverged naming the step.
Dataset generate_dataset(const GridModel& grid, const LoadSeries& series, const MeasurementPlan& plan,
                         const NoiseConfig& noise, std::uint64_t seed);

/// ||v_hat - v||_2 / N with N = dim / 2.
double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);
/// Mean of the per-column rmse.
double mean_rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);
/// Per-column rmse.
Eigen::VectorXd column_rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

/// One JSON header line (`dataset/1`, SHA-256 of the payload) followed by a
/// CSV payload with columns t, z_1..z_M, v_1..v_2N, mask_1..mask_M.
std::string dataset_to_text(const Dataset& data);
Dataset dataset_from_text(std::string_view text);
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace psse
