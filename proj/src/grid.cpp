#include "psse/grid.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "psse/error.hpp"

namespace psse {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

using Table = std::vector<std::vector<double>>;

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_quote = false;
  for (char c : text) {
    if (c == '\n') {
      in_comment = false;
      in_quote = false;
      out.push_back(c);
      continue;
    }
    if (in_comment) continue;
    if (c == '\'') in_quote = !in_quote;
    if (c == '%' && !in_quote) {
      in_comment = true;
      continue;
    }
    out.push_back(c);
  }
  return out;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

double parse_number(std::string_view token, std::string_view block) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '+') ++first;
  if (token == "Inf" || token == "inf") return std::numeric_limits<double>::infinity();
  if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(Errc::MalformedRow,
                "non-numeric entry '" + std::string(token) + "' in " + std::string(block));
  }
  return value;
}

Table parse_matrix(std::string_view body, std::string_view block) {
  Table rows;
  std::vector<double> row;
  std::string token;
  auto flush_token = [&] {
    if (!token.empty()) {
      row.push_back(parse_number(token, block));
      token.clear();
    }
  };
  auto flush_row = [&] {
    flush_token();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (char c : body) {
    if (c == ';' || c == '\n') {
      flush_row();
    } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush_token();
    } else {
      token.push_back(c);
    }
  }
  flush_row();
  return rows;
}

struct Assignments {
  std::optional<double> base_mva;
  std::unordered_map<std::string, Table> tables;
};

Assignments scan_assignments(const std::string& text, std::vector<std::string>* warnings) {
  Assignments out;
  std::size_t pos = 0;
  while ((pos = text.find('=', pos)) != std::string::npos) {
    // identifier (possibly mpc.<name>) immediately before '='
    std::size_t end = pos;
    while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    std::size_t begin = end;
    while (begin > 0 && is_ident_char(text[begin - 1])) --begin;
    const std::string name = text.substr(begin, end - begin);
    std::size_t rhs = pos + 1;
    while (rhs < text.size() && std::isspace(static_cast<unsigned char>(text[rhs]))) ++rhs;
    pos = rhs;
    if (name.empty() || rhs >= text.size()) continue;
    // skip `function mpc = caseX` and `[a, b] = ...` headers
    if (begin > 0 && text[begin - 1] != '.' && text[begin - 1] != '\n' &&
        !std::isspace(static_cast<unsigned char>(text[begin - 1])) && text[begin - 1] != ';') {
      continue;
    }
    const char opener = text[rhs];
    if (opener == '[') {
      const std::size_t close = text.find(']', rhs);
      if (close == std::string::npos) {
        throw Error(Errc::MalformedRow, "unterminated matrix for '" + name + "'");
      }
      if (name == "bus" || name == "branch" || name == "gen") {
        out.tables[name] = parse_matrix(std::string_view(text).substr(rhs + 1, close - rhs - 1), name);
      } else if (warnings) {
        warnings->push_back("ignored unsupported field '" + name + "'");
      }
      pos = close + 1;
    } else if (name == "baseMVA") {
      std::size_t stop = rhs;
      while (stop < text.size() && text[stop] != ';' && text[stop] != '\n') ++stop;
      std::string token(text.substr(rhs, stop - rhs));
      while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.pop_back();
      out.base_mva = parse_number(token, "baseMVA");
      pos = stop;
    } else if (name != "version" && name != "mpc" && warnings) {
      warnings->push_back("ignored unsupported field '" + name + "'");
    }
  }
  return out;
}

void check_columns(const Table& table, std::size_t min_cols, std::string_view name) {
  if (table.empty()) return;
  const std::size_t width = table.front().size();
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].size() < min_cols || table[i].size() != width) {
      throw Error(Errc::MalformedRow, std::string(name) + " row " + std::to_string(i + 1) + " has " +
                                          std::to_string(table[i].size()) + " columns, expected " +
                                          std::to_string(std::max(min_cols, width)));
    }
  }
}

}  // namespace

std::size_t GridModel::slack_index() const {
  for (const auto& bus : buses) {
    if (bus.type == BusType::Slack) return bus.index;
  }
  throw Error(Errc::NoSlackBus, "grid has no slack bus");
}

StateVector StateVector::flat(std::size_t buses) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * buses));
  for (std::size_t n = 0; n < buses; ++n) v[2 * n] = 1.0;
  return StateVector(std::move(v));
}

StateVector StateVector::from_polar(const Eigen::VectorXd& vm, const Eigen::VectorXd& va) {
  Eigen::VectorXd v(2 * vm.size());
  for (Eigen::Index n = 0; n < vm.size(); ++n) {
    v[2 * n] = vm[n] * std::cos(va[n]);
    v[2 * n + 1] = vm[n] * std::sin(va[n]);
  }
  return StateVector(std::move(v));
}

Eigen::VectorXd StateVector::magnitudes() const {
  Eigen::VectorXd out(bus_count());
  for (std::size_t n = 0; n < bus_count(); ++n) out[n] = std::abs(at(n));
  return out;
}

Eigen::VectorXd StateVector::angles() const {
  Eigen::VectorXd out(bus_count());
  for (std::size_t n = 0; n < bus_count(); ++n) out[n] = std::arg(at(n));
  return out;
}

GridModel parse_matpower_case(std::string_view text, std::vector<std::string>* warnings) {
  const std::string clean = strip_comments(text);
  Assignments found = scan_assignments(clean, warnings);

  if (!found.base_mva) throw Error(Errc::MissingBlock, "no baseMVA assignment");
  auto bus_it = found.tables.find("bus");
  auto branch_it = found.tables.find("branch");
  if (bus_it == found.tables.end() || bus_it->second.empty()) {
    throw Error(Errc::MissingBlock, "no bus table");
  }
  if (branch_it == found.tables.end() || branch_it->second.empty()) {
    throw Error(Errc::MissingBlock, "no branch table");
  }
  const Table& bus_rows = bus_it->second;
  const Table& branch_rows = branch_it->second;
  check_columns(bus_rows, 13, "bus");
  check_columns(branch_rows, 11, "branch");

  GridModel grid;
  grid.base_mva = *found.base_mva;
  const double base = grid.base_mva;

  std::unordered_map<int, std::size_t> index_of;
  for (const auto& row : bus_rows) {
    const int id = static_cast<int>(row[0]);
    if (!index_of.emplace(id, grid.buses.size()).second) {
      throw Error(Errc::DuplicateBusId, "bus id " + std::to_string(id) + " appears twice");
    }
    Bus bus;
    bus.index = grid.buses.size();
    bus.original_id = id;
    switch (static_cast<int>(row[1])) {
      case 3: bus.type = BusType::Slack; break;
      case 2: bus.type = BusType::PV; break;
      case 1: bus.type = BusType::PQ; break;
      default:
        bus.type = BusType::PQ;
        if (warnings) warnings->push_back("bus " + std::to_string(id) + " type treated as PQ");
    }
    bus.pd = row[2] / base;
    bus.qd = row[3] / base;
    bus.gs = row[4] / base;
    bus.bs = row[5] / base;
    bus.vm_init = row[7];
    bus.va_init = row[8] * kDegToRad;
    grid.buses.push_back(bus);
  }

  auto lookup = [&](double raw, std::string_view what) {
    auto it = index_of.find(static_cast<int>(raw));
    if (it == index_of.end()) {
      throw Error(Errc::MalformedRow, std::string(what) + " references unknown bus " +
                                          std::to_string(static_cast<int>(raw)));
    }
    return it->second;
  };

  for (const auto& row : branch_rows) {
    Branch br;
    br.from = lookup(row[0], "branch");
    br.to = lookup(row[1], "branch");
    br.r = row[2];
    br.x = row[3];
    br.b_charging = row[4];
    br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];
    br.phase_shift = row[9] * kDegToRad;
    br.in_service = row[10] != 0.0;
    grid.branches.push_back(br);
  }

  if (auto gen_it = found.tables.find("gen"); gen_it != found.tables.end()) {
    check_columns(gen_it->second, 8, "gen");
    for (const auto& row : gen_it->second) {
      Generator g;
      g.bus = lookup(row[0], "gen");
      g.pg = row[1] / base;
      g.qg = row[2] / base;
      g.vset = row[5];
      g.in_service = row[7] > 0.0;
      grid.gens.push_back(g);
    }
  }

  // PV/slack buses take their voltage set point from an in-service generator.
  std::vector<bool> has_gen(grid.buses.size(), false);
  for (const auto& g : grid.gens) {
    if (!g.in_service) continue;
    has_gen[g.bus] = true;
    if (grid.buses[g.bus].type != BusType::PQ) grid.buses[g.bus].vm_init = g.vset;
  }
  for (auto& bus : grid.buses) {
    if (bus.type == BusType::PV && !has_gen[bus.index]) {
      bus.type = BusType::PQ;
      if (warnings) {
        warnings->push_back("PV bus " + std::to_string(bus.original_id) +
                            " has no in-service generator; treated as PQ");
      }
    }
  }

  validate_grid(grid);
  return grid;
}

GridModel load_matpower_case(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_matpower_case(buffer.str(), warnings);
}

GridModel load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return grid_from_json(text);
  return parse_matpower_case(text);
}

void validate_grid(const GridModel& grid) {
  const std::size_t n = grid.buses.size();
  if (n < 2) throw Error(Errc::InvalidArgument, "grid needs at least 2 buses");
  std::size_t slack = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.buses[i].index != i) throw Error(Errc::InvalidArgument, "bus indices not contiguous");
    if (grid.buses[i].type == BusType::Slack) ++slack;
  }
  if (slack == 0) throw Error(Errc::NoSlackBus, "grid has no slack bus");
  if (slack > 1) {
    throw Error(Errc::NoSlackBus, "expected exactly one slack bus, found " + std::to_string(slack));
  }
  for (const auto& br : grid.branches) {
    if (br.from >= n || br.to >= n) throw Error(Errc::MalformedRow, "branch endpoint out of range");
    if (br.from == br.to) throw Error(Errc::MalformedRow, "branch connects a bus to itself");
  }
  for (const auto& g : grid.gens) {
    if (g.bus >= n) throw Error(Errc::MalformedRow, "generator bus out of range");
  }
}

AdmittanceModel build_admittance(const GridModel& grid) {
  const std::size_t n = grid.bus_count();
  AdmittanceModel adm;
  adm.bus_count = n;
  adm.branch.resize(grid.branches.size());
  adm.shunt.resize(n);

  std::vector<Eigen::Triplet<Complex>> entries;
  entries.reserve(4 * grid.branches.size() + n);
  for (std::size_t k = 0; k < grid.branches.size(); ++k) {
    const Branch& br = grid.branches[k];
    adm.branch[k].from = br.from;
    adm.branch[k].to = br.to;
    if (!br.in_service) continue;
    if (br.r == 0.0 && br.x == 0.0) {
      throw Error(Errc::ZeroImpedanceBranch, "branch " + std::to_string(k + 1) + " has r + jx = 0");
    }
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex tap = std::polar(br.tap_ratio, br.phase_shift);
    const Complex ytt = ys + Complex(0.0, br.b_charging / 2.0);
    BranchAdmittance& y = adm.branch[k];
    y.in_service = true;
    y.ytt = ytt;
    y.yff = ytt / (tap * std::conj(tap));
    y.yft = -ys / std::conj(tap);
    y.ytf = -ys / tap;
    const auto f = static_cast<Eigen::Index>(br.from);
    const auto t = static_cast<Eigen::Index>(br.to);
    entries.emplace_back(f, f, y.yff);
    entries.emplace_back(f, t, y.yft);
    entries.emplace_back(t, f, y.ytf);
    entries.emplace_back(t, t, y.ytt);
  }
  for (std::size_t i = 0; i < n; ++i) {
    adm.shunt[i] = Complex(grid.buses[i].gs, grid.buses[i].bs);
    if (adm.shunt[i] != Complex(0.0, 0.0)) {
      const auto ii = static_cast<Eigen::Index>(i);
      entries.emplace_back(ii, ii, adm.shunt[i]);
    }
  }
  adm.ybus.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adm.ybus.setFromTriplets(entries.begin(), entries.end());
  adm.ybus.makeCompressed();
  return adm;
}

Eigen::VectorXcd bus_injections(const AdmittanceModel& adm, const StateVector& v) {
  require_dims(v.bus_count() == adm.bus_count && v.values.size() % 2 == 0,
               "state dimension does not match admittance model");
  Eigen::VectorXcd volts(adm.bus_count);
  for (std::size_t n = 0; n < adm.bus_count; ++n) volts[n] = v.at(n);
  const Eigen::VectorXcd current = adm.ybus * volts;
  return volts.cwiseProduct(current.conjugate());
}

Eigen::VectorXcd scheduled_injections(const GridModel& grid) {
  Eigen::VectorXcd s(grid.bus_count());
  for (const auto& bus : grid.buses) s[bus.index] = Complex(-bus.pd, -bus.qd);
  for (const auto& g : grid.gens) {
    if (g.in_service) s[g.bus] += Complex(g.pg, g.qg);
  }
  return s;
}

AngleReference slack_reference(const GridModel& grid) {
  const std::size_t s = grid.slack_index();
  return {s, grid.buses[s].va_init};
}

}  // namespace psse
