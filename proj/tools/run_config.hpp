#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "egoid/experiments.hpp"
#include "egoid/flowgrid.hpp"
#include "egoid/synthgait.hpp"

namespace egoid::cli {

/// Everything a command may need, as one JSON document. Unknown keys are
/// rejected so that typos do not silently fall back to defaults.
struct RunConfig {
  std::uint64_t seed = 1;  // drives SMO order, network init, batching and splits
  flowgrid::FlowGridSpec flowgrid;
  experiments::BackendConfig backends;
  std::string protocol = "evpr-identification";
  std::string target;  // verification target subject
  std::size_t train_nontargets = 15;
  std::vector<double> durations = {4.0, 12.0};
  synth::PopulationConfig synth;

  /// Copies `seed` into the back-end configs.
  void propagate_seed();
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `j` on `base`; throws kValidation on unknown keys or bad types.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::string& path);

/// Canonical serialization and its FNV-1a hash.
std::string canonical(const nlohmann::json& j);
std::string config_hash(const nlohmann::json& j);

}  // namespace egoid::cli
