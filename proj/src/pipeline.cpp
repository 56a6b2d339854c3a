#include "psse/pipeline.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "psse/error.hpp"
#include "psse/rng.hpp"
#include "psse/util.hpp"

namespace psse {

namespace {

constexpr std::string_view kDatasetSchema = "dataset/1";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '"')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '"' || cell.back() == '\r')) cell.remove_suffix(1);
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::size_t bus_by_id(const GridModel& grid, int id) {
  for (const Bus& b : grid.buses) {
    if (b.original_id == id) return b.index;
  }
  throw Error(Errc::ColumnMapInvalid, "column map names unknown bus " + std::to_string(id));
}

nlohmann::json noise_json(const NoiseConfig& n) { return {{"sigma_flow", n.sigma_flow}, {"sigma_mag", n.sigma_mag}}; }

}  // namespace

std::string_view load_source_name(LoadSource s) noexcept { return s == LoadSource::Csv ? "csv" : "synthetic"; }

void LoadSeries::validate() const {
  require_dims(static_cast<Eigen::Index>(time.size()) == active.rows() &&
                   static_cast<Eigen::Index>(buses.size()) == active.cols(),
               "load series shape");
  require_dims(reactive.size() == 0 || (reactive.rows() == active.rows() && reactive.cols() == active.cols()),
               "reactive load series shape");
  for (std::size_t t = 1; t < time.size(); ++t) {
    if (!(time[t] > time[t - 1])) {
      throw Error(Errc::InvalidArgument, "load series time is not strictly increasing at row " + std::to_string(t));
    }
  }
  if (!active.allFinite() || (active.size() > 0 && active.minCoeff() < 0.0)) {
    throw Error(Errc::InvalidArgument, "load series has negative or non-finite active demand");
  }
}

LoadSeries ingest_load_csv(const std::string& path, const GridModel& grid, const LoadColumnMap& map,
                           const std::string& time_column, int subsample) {
  if (subsample < 1) throw Error(Errc::InvalidArgument, "subsampling factor must be >= 1");
  if (map.empty()) throw Error(Errc::ColumnMapInvalid, "column map is empty");
  const std::string text = read_text_file(path);
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error(Errc::ParseError, path + ": missing header");
  const auto header = split_csv(lines.front());
  auto column_of = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw Error(Errc::ColumnMapInvalid, path + ": no column '" + name + "'");
  };
  const std::size_t time_col = column_of(time_column);
  std::vector<std::size_t> source_cols;
  LoadSeries out;
  out.source = LoadSource::Csv;
  for (const auto& [name, ids] : map) {
    const std::size_t col = column_of(name);
    if (ids.empty()) throw Error(Errc::ColumnMapInvalid, "column '" + name + "' maps to no bus");
    for (int id : ids) {
      const std::size_t bus = bus_by_id(grid, id);
      for (std::size_t b : out.buses) {
        if (b == bus) throw Error(Errc::ColumnMapInvalid, "bus " + std::to_string(id) + " mapped twice");
      }
      out.buses.push_back(bus);
      source_cols.push_back(col);
    }
  }
  std::vector<std::vector<double>> rows;
  std::size_t data_row = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t row = data_row++;
    if (row % static_cast<std::size_t>(subsample) != 0) continue;
    const auto cells = split_csv(lines[i]);
    if (cells.size() != header.size()) {
      throw Error(Errc::ParseError, path + ":" + std::to_string(i + 1) + ": expected " +
                                        std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    try {
      out.time.push_back(parse_double(cells[time_col]));
      std::vector<double> values;
      for (std::size_t c : source_cols) values.push_back(parse_double(cells[c]));
      rows.push_back(std::move(values));
    } catch (const Error& e) {
      throw Error(Errc::ParseError, path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  out.active.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.buses.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out.active(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  out.validate();
  return out;
}

void write_load_csv(const std::string& path, const LoadSeries& series, const GridModel& grid,
                    const std::string& time_column) {
  series.validate();
  std::ostringstream os;
  os << time_column;
  for (std::size_t b : series.buses) os << ",bus" << grid.buses.at(b).original_id;
  os << '\n';
  for (Eigen::Index t = 0; t < series.length(); ++t) {
    os << format_double(series.time[static_cast<std::size_t>(t)]);
    for (Eigen::Index c = 0; c < series.active.cols(); ++c) os << ',' << format_double(series.active(t, c));
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::string_view load_profile_name(LoadProfile p) noexcept {
  return p == LoadProfile::RandomWalk ? "random-walk" : "sinusoid";
}

LoadProfile load_profile_from_name(std::string_view name) {
  if (name == "sinusoid" || name == "sinusoid+noise") return LoadProfile::SinusoidNoise;
  if (name == "random-walk") return LoadProfile::RandomWalk;
  throw Error(Errc::InvalidArgument, "unknown load profile '" + std::string(name) + "'");
}

LoadSeries synth_load_series(const GridModel& grid, Eigen::Index length, std::uint64_t seed,
                             LoadProfile profile, const SynthOptions& opts) {
  if (length < 2) throw Error(Errc::InvalidArgument, "load series length must be >= 2");
  if (opts.amplitude < 0.0 || !(opts.period > 0.0) || opts.noise_ratio < 0.0) {
    throw Error(Errc::InvalidArgument, "synthetic load options out of range");
  }
  LoadSeries out;
  out.source = LoadSource::Synthetic;
  for (const Bus& b : grid.buses) {
    if (b.pd != 0.0 || b.qd != 0.0) out.buses.push_back(b.index);
  }
  const auto cols = static_cast<Eigen::Index>(out.buses.size());
  out.time.resize(static_cast<std::size_t>(length));
  for (Eigen::Index t = 0; t < length; ++t) out.time[static_cast<std::size_t>(t)] = static_cast<double>(t);
  out.active.resize(length, cols);
  Rng rng(seed);
  const double a = opts.amplitude;
  if (profile == LoadProfile::SinusoidNoise) {
    std::vector<double> phase(static_cast<std::size_t>(cols));
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index t = 0; t < length; ++t) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / opts.period;
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double g = rng.normal();
        out.active(t, c) = std::max(0.0, 1.0 + a * std::sin(angle + phase[static_cast<std::size_t>(c)]) +
                                             opts.noise_ratio * a * g);
      }
    }
  } else {
    out.active.row(0).setOnes();
    for (Eigen::Index t = 1; t < length; ++t) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        out.active(t, c) = std::max(0.0, out.active(t - 1, c) + a / 20.0 * rng.normal());
      }
    }
  }
  return out;
}

LoadSeries scale_loads(const LoadSeries& series, const GridModel& grid) {
  series.validate();
  LoadSeries out = series;
  out.absolute = true;
  out.reactive.resize(series.active.rows(), series.active.cols());
  for (Eigen::Index c = 0; c < series.active.cols(); ++c) {
    const Bus& bus = grid.buses.at(series.buses[static_cast<std::size_t>(c)]);
    const auto column = series.active.col(c);
    const double mean = column.mean();
    const double spread = column.maxCoeff() - column.minCoeff();
    if (spread == 0.0) {
      out.active.col(c).setConstant(bus.pd);
      out.reactive.col(c).setConstant(bus.qd);
      continue;
    }
    if (!(mean > 0.0)) {
      throw Error(Errc::DegenerateSeries, "load column for bus " + std::to_string(bus.original_id) +
                                              " has zero mean and cannot be rescaled");
    }
    out.active.col(c) = column * (bus.pd / mean);
    out.reactive.col(c) = column * (bus.qd / mean);
  }
  return out;
}

void Dataset::validate() const {
  const auto t = static_cast<Eigen::Index>(time.size());
  require_dims(z.cols() == t && v.cols() == t && mask.cols() == t, "dataset sample counts");
  require_dims(z.rows() == static_cast<Eigen::Index>(plan.size()) && mask.rows() == z.rows(),
               "dataset measurement dimension vs plan");
  require_dims(v.rows() % 2 == 0, "dataset state dimension must be even");
}

Dataset Dataset::slice(Eigen::Index first, Eigen::Index count) const {
  require_dims(first >= 0 && count >= 0 && first + count <= this->count(), "dataset slice bounds");
  Dataset out;
  out.time.assign(time.begin() + first, time.begin() + first + count);
  out.z = z.middleCols(first, count);
  out.v = v.middleCols(first, count);
  out.mask = mask.middleCols(first, count);
  out.plan = plan;
  out.noise = noise;
  out.seed = seed;
  out.grid_fingerprint = grid_fingerprint;
  out.provenance = provenance;
  out.provenance["slice"] = {first, count};
  return out;
}

Dataset generate_dataset(const GridModel& grid, const LoadSeries& series, const MeasurementPlan& plan,
                         const NoiseConfig& noise, std::uint64_t seed) {
  series.validate();
  if (!series.absolute) throw Error(Errc::InvalidArgument, "load series must be rescaled to demands first");
  if (noise.sigma_flow < 0.0 || noise.sigma_mag < 0.0) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
  const FormSet forms = build_measurement_matrices(grid, plan);
  const auto m = static_cast<Eigen::Index>(plan.size());
  const auto n = static_cast<Eigen::Index>(grid.state_dim());
  const Eigen::Index steps = series.length();

  Dataset out;
  out.time = series.time;
  out.z.resize(m, steps);
  out.v.resize(n, steps);
  out.mask.setOnes(m, steps);
  out.plan = plan;
  out.noise = noise;
  out.seed = seed;
  out.grid_fingerprint = grid_fingerprint(grid);
  out.provenance = {{"source", load_source_name(series.source)}, {"steps", steps}};

  GridModel step_grid = grid;
  const AdmittanceModel adm = build_admittance(grid);
  for (Eigen::Index t = 0; t < steps; ++t) {
    for (Eigen::Index c = 0; c < series.active.cols(); ++c) {
      Bus& bus = step_grid.buses[series.buses[static_cast<std::size_t>(c)]];
      bus.pd = series.active(t, c);
      bus.qd = series.reactive(t, c);
    }
    PowerFlowSolution pf;
    try {
      pf = solve_power_flow(step_grid, adm, {});
    } catch (const Error& e) {
      throw Error(e.code(), "power flow failed at step " + std::to_string(t) + ": " + e.what());
    }
    out.v.col(t) = pf.state.values;
    const Eigen::VectorXd clean = evaluate_measurements(forms, pf.state);
    out.z.col(t) = add_gaussian_noise(clean, plan, noise.sigma_flow, noise.sigma_mag,
                                      derive_seed(seed, static_cast<std::uint64_t>(t)))
                       .values;
  }
  return out;
}

double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  require_dims(estimate.size() == truth.size() && truth.size() % 2 == 0 && truth.size() > 0,
               "rmse operands must have equal even length");
  return (estimate - truth).norm() / static_cast<double>(truth.size() / 2);
}

Eigen::VectorXd column_rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  require_dims(estimate.rows() == truth.rows() && estimate.cols() == truth.cols(), "rmse operand shapes");
  Eigen::VectorXd out(truth.cols());
  for (Eigen::Index c = 0; c < truth.cols(); ++c) out[c] = rmse(estimate.col(c), truth.col(c));
  return out;
}

double mean_rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  const Eigen::VectorXd per = column_rmse(estimate, truth);
  return per.size() == 0 ? 0.0 : per.mean();
}

std::string dataset_to_text(const Dataset& data) {
  data.validate();
  std::string payload;
  payload.reserve(static_cast<std::size_t>((data.z.rows() + data.v.rows()) * data.count() * 22));
  payload += "t";
  for (Eigen::Index i = 1; i <= data.z.rows(); ++i) payload += ",z_" + std::to_string(i);
  for (Eigen::Index i = 1; i <= data.v.rows(); ++i) payload += ",v_" + std::to_string(i);
  for (Eigen::Index i = 1; i <= data.z.rows(); ++i) payload += ",mask_" + std::to_string(i);
  payload += '\n';
  for (Eigen::Index t = 0; t < data.count(); ++t) {
    payload += format_double(data.time[static_cast<std::size_t>(t)]);
    for (Eigen::Index i = 0; i < data.z.rows(); ++i) (payload += ',') += format_double(data.z(i, t));
    for (Eigen::Index i = 0; i < data.v.rows(); ++i) (payload += ',') += format_double(data.v(i, t));
    for (Eigen::Index i = 0; i < data.z.rows(); ++i) (payload += ',') += data.mask(i, t) ? '1' : '0';
    payload += '\n';
  }
  nlohmann::json header;
  header["schema"] = kDatasetSchema;
  header["samples"] = data.count();
  header["measurements"] = data.z.rows();
  header["state_dim"] = data.v.rows();
  header["plan"] = nlohmann::json::parse(plan_to_json(data.plan));
  header["noise"] = noise_json(data.noise);
  header["seed"] = data.seed;
  header["grid_fingerprint"] = data.grid_fingerprint;
  header["provenance"] = data.provenance;
  header["payload_sha256"] = sha256_hex(payload);
  return header.dump() + "\n" + payload;
}

Dataset dataset_from_text(std::string_view text) {
  const std::size_t newline = text.find('\n');
  if (newline == std::string_view::npos) throw Error(Errc::CorruptFile, "dataset lacks a header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("dataset header: ") + e.what());
  }
  const std::string schema = header.value("schema", "");
  if (schema != kDatasetSchema) {
    throw Error(Errc::SchemaMismatch, "dataset schema '" + schema + "' is not " + std::string(kDatasetSchema) +
                                          "; regenerate it with `psse gen-data` from its recorded provenance");
  }
  const std::string_view payload = text.substr(newline + 1);
  if (sha256_hex(payload) != header.value("payload_sha256", "")) {
    throw Error(Errc::CorruptFile, "dataset payload checksum mismatch");
  }
  Dataset out;
  try {
    const auto samples = header.at("samples").get<Eigen::Index>();
    const auto m = header.at("measurements").get<Eigen::Index>();
    const auto n = header.at("state_dim").get<Eigen::Index>();
    out.plan = plan_from_json(header.at("plan").dump());
    out.noise.sigma_flow = header.at("noise").at("sigma_flow").get<double>();
    out.noise.sigma_mag = header.at("noise").at("sigma_mag").get<double>();
    out.seed = header.at("seed").get<std::uint64_t>();
    out.grid_fingerprint = header.at("grid_fingerprint").get<std::string>();
    out.provenance = header.at("provenance");
    out.time.resize(static_cast<std::size_t>(samples));
    out.z.resize(m, samples);
    out.v.resize(n, samples);
    out.mask.resize(m, samples);
    const auto lines = split_lines(payload);
    if (static_cast<Eigen::Index>(lines.size()) != samples + 1) {
      throw Error(Errc::CorruptFile, "dataset payload row count differs from the header");
    }
    for (Eigen::Index t = 0; t < samples; ++t) {
      const auto cells = split_csv(lines[static_cast<std::size_t>(t + 1)]);
      if (static_cast<Eigen::Index>(cells.size()) != 1 + 2 * m + n) {
        throw Error(Errc::CorruptFile, "dataset row " + std::to_string(t) + " has the wrong column count");
      }
      out.time[static_cast<std::size_t>(t)] = parse_double(cells[0]);
      for (Eigen::Index i = 0; i < m; ++i) out.z(i, t) = parse_double(cells[static_cast<std::size_t>(1 + i)]);
      for (Eigen::Index i = 0; i < n; ++i) out.v(i, t) = parse_double(cells[static_cast<std::size_t>(1 + m + i)]);
      for (Eigen::Index i = 0; i < m; ++i) {
        out.mask(i, t) = cells[static_cast<std::size_t>(1 + m + n + i)] == "1" ? 1 : 0;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("dataset header: ") + e.what());
  }
  out.validate();
  return out;
}

void save_dataset(const std::string& path, const Dataset& data) { write_text_file(path, dataset_to_text(data)); }

Dataset load_dataset(const std::string& path) { return dataset_from_text(read_text_file(path)); }

}  // namespace psse
