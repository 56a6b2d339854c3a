#pragma once

// Shared ckpt/1 helpers for the estimator and forecaster checkpoints.

#include <string>
#include <string_view>

#include "json.hpp"
#include "psse/error.hpp"
#include "psse/neuralnet.hpp"

namespace psse::detail {

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"loss", loss_name(cfg.loss.kind)},
          {"huber_delta", cfg.loss.delta},
          {"learning_rate", cfg.adam.learning_rate},
          {"lr_decay", cfg.lr_decay},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"epsilon", cfg.adam.epsilon},
          {"seed", cfg.seed}};
}

template <class P>
nlohmann::json tensors_json(const P& params) {
  nlohmann::json out = nlohmann::json::array();
  const_cast<P&>(params).visit([&](const std::string& name, Tensor& t) {
    out.push_back({{"name", name},
                   {"rows", t.rows()},
                   {"cols", t.cols()},
                   {"data", std::vector<double>(t.data(), t.data() + t.size())}});
  });
  return out;
}

/// Fills tensors already sized by the caller; names and shapes must match.
template <class P>
void load_tensors(const nlohmann::json& list, P& params) {
  std::size_t i = 0;
  params.visit([&](const std::string& name, Tensor& t) {
    if (i >= list.size()) throw Error(Errc::SchemaMismatch, "checkpoint lacks tensor " + name);
    const auto& e = list.at(i++);
    if (e.at("name").get<std::string>() != name || e.at("rows").get<Eigen::Index>() != t.rows() ||
        e.at("cols").get<Eigen::Index>() != t.cols()) {
      throw Error(Errc::SchemaMismatch, "checkpoint tensor " + name + " has unexpected name or shape");
    }
    const auto data = e.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != t.size()) {
      throw Error(Errc::SchemaMismatch, "checkpoint tensor " + name + " has wrong length");
    }
    t = Eigen::Map<const Tensor>(data.data(), t.rows(), t.cols());
  });
  if (i != list.size()) throw Error(Errc::SchemaMismatch, "checkpoint has extra tensors");
}

inline nlohmann::json parse_checkpoint(std::string_view text, std::string_view arch) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint JSON: ") + e.what());
  }
  if (j.value("schema", "") != "ckpt/1") throw Error(Errc::SchemaMismatch, "expected schema ckpt/1");
  if (!arch.empty() && j.value("arch", "") != arch) {
    throw Error(Errc::SchemaMismatch, "checkpoint holds '" + j.value("arch", "") + "', expected '" +
                                          std::string(arch) + "'");
  }
  return j;
}

}  // namespace psse::detail
