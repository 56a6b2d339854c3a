#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "psse/error.hpp"
#include "psse/grid.hpp"
#include "psse/util.hpp"

namespace psse {

namespace {

using nlohmann::json;

std::string_view type_name(BusType t) {
  switch (t) {
    case BusType::Slack: return "slack";
    case BusType::PV: return "PV";
    case BusType::PQ: return "PQ";
  }
  return "PQ";
}

BusType type_from_name(const std::string& s) {
  if (s == "slack") return BusType::Slack;
  if (s == "PV") return BusType::PV;
  if (s == "PQ") return BusType::PQ;
  throw Error(Errc::ParseError, "unknown bus type '" + s + "'");
}

int matpower_type(BusType t) {
  switch (t) {
    case BusType::Slack: return 3;
    case BusType::PV: return 2;
    case BusType::PQ: return 1;
  }
  return 1;
}

}  // namespace

std::string grid_to_json(const GridModel& grid) {
  json j;
  j["schema"] = "grid/1";
  j["base_mva"] = grid.base_mva;
  json buses = json::array();
  for (const auto& b : grid.buses) {
    buses.push_back({{"id", b.index + 1},
                     {"original_id", b.original_id},
                     {"type", type_name(b.type)},
                     {"pd", b.pd},
                     {"qd", b.qd},
                     {"gs", b.gs},
                     {"bs", b.bs},
                     {"vm", b.vm_init},
                     {"va", b.va_init}});
  }
  json branches = json::array();
  for (const auto& br : grid.branches) {
    branches.push_back({{"from", br.from + 1},
                        {"to", br.to + 1},
                        {"r", br.r},
                        {"x", br.x},
                        {"b", br.b_charging},
                        {"tap", br.tap_ratio},
                        {"shift", br.phase_shift},
                        {"in_service", br.in_service}});
  }
  json gens = json::array();
  for (const auto& g : grid.gens) {
    gens.push_back({{"bus", g.bus + 1},
                    {"pg", g.pg},
                    {"qg", g.qg},
                    {"vset", g.vset},
                    {"in_service", g.in_service}});
  }
  j["buses"] = std::move(buses);
  j["branches"] = std::move(branches);
  j["gens"] = std::move(gens);
  return j.dump(1);
}

GridModel grid_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("grid JSON: ") + e.what());
  }
  if (j.value("schema", "") != "grid/1") {
    throw Error(Errc::SchemaMismatch, "expected schema grid/1, got '" + j.value("schema", "") + "'");
  }
  GridModel grid;
  try {
    grid.base_mva = j.at("base_mva").get<double>();
    for (const auto& b : j.at("buses")) {
      Bus bus;
      bus.index = b.at("id").get<std::size_t>() - 1;
      bus.original_id = b.at("original_id").get<int>();
      bus.type = type_from_name(b.at("type").get<std::string>());
      bus.pd = b.at("pd").get<double>();
      bus.qd = b.at("qd").get<double>();
      bus.gs = b.at("gs").get<double>();
      bus.bs = b.at("bs").get<double>();
      bus.vm_init = b.at("vm").get<double>();
      bus.va_init = b.at("va").get<double>();
      grid.buses.push_back(bus);
    }
    for (const auto& b : j.at("branches")) {
      Branch br;
      br.from = b.at("from").get<std::size_t>() - 1;
      br.to = b.at("to").get<std::size_t>() - 1;
      br.r = b.at("r").get<double>();
      br.x = b.at("x").get<double>();
      br.b_charging = b.at("b").get<double>();
      br.tap_ratio = b.at("tap").get<double>();
      br.phase_shift = b.at("shift").get<double>();
      br.in_service = b.at("in_service").get<bool>();
      grid.branches.push_back(br);
    }
    for (const auto& g : j.at("gens")) {
      Generator gen;
      gen.bus = g.at("bus").get<std::size_t>() - 1;
      gen.pg = g.at("pg").get<double>();
      gen.qg = g.at("qg").get<double>();
      gen.vset = g.at("vset").get<double>();
      gen.in_service = g.at("in_service").get<bool>();
      grid.gens.push_back(gen);
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("grid JSON: ") + e.what());
  }
  validate_grid(grid);
  return grid;
}

std::string grid_fingerprint(const GridModel& grid) {
  return sha256_hex(grid_to_json(grid));
}

std::string write_matpower_case(const GridModel& grid, std::string_view name) {
  const double base = grid.base_mva;
  const double to_deg = 180.0 / std::numbers::pi;
  std::ostringstream os;
  os << std::setprecision(17);
  os << "function mpc = " << name << "\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << base << ";\n\n";
  os << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
  os << "mpc.bus = [\n";
  for (const auto& b : grid.buses) {
    os << '\t' << b.original_id << '\t' << matpower_type(b.type) << '\t' << b.pd * base << '\t'
       << b.qd * base << '\t' << b.gs * base << '\t' << b.bs * base << "\t1\t" << b.vm_init << '\t'
       << b.va_init * to_deg << "\t0\t1\t1.1\t0.9;\n";
  }
  os << "];\n\n";
  os << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n";
  os << "mpc.gen = [\n";
  for (const auto& g : grid.gens) {
    os << '\t' << grid.buses[g.bus].original_id << '\t' << g.pg * base << '\t' << g.qg * base
       << "\t9999\t-9999\t" << g.vset << '\t' << base << '\t' << (g.in_service ? 1 : 0)
       << "\t9999\t0;\n";
  }
  os << "];\n\n";
  os << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n";
  os << "mpc.branch = [\n";
  for (const auto& br : grid.branches) {
    os << '\t' << grid.buses[br.from].original_id << '\t' << grid.buses[br.to].original_id << '\t'
       << br.r << '\t' << br.x << '\t' << br.b_charging << "\t0\t0\t0\t"
       << (br.tap_ratio == 1.0 ? 0.0 : br.tap_ratio) << '\t' << br.phase_shift * to_deg << '\t'
       << (br.in_service ? 1 : 0) << "\t-360\t360;\n";
  }
  os << "];\n";
  return os.str();
}

}  // namespace psse
