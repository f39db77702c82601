// Copyright 2026 The OASIS Engine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oasis/adapt.hpp"
#include "oasis/pretrain.hpp"
#include "oasis/worldgen.hpp"

namespace oasis {

inline constexpr const char* kEngineVersion = "0.3.0";

enum class Precision { kDouble, kFloat };

struct RunConfig {
  std::uint64_t seed = 7;
  Precision precision = Precision::kDouble;
  std::string output = "run";
  WorldConfig world;
  PretrainConfig pretrain;
  /// Randomization levels trained next to the ERM model.
  std::vector<int> dr_levels{2, 3, 4};
  /// One configuration per strategy, indexed by StrategyKind; the centre of
  /// that strategy's validation grid.
  std::vector<StrategyConfig> strategies;
  /// Strategies entering validation, in report order.
  std::vector<StrategyKind> validate_strategies;
  std::vector<int> grid_adapt_iters{1};
  bool grid_on_all_checkpoints = false;
  /// Deploy-time iteration sweep of one strategy around its validated winner.
  StrategyKind sweep_strategy = StrategyKind::kNPl;
  std::vector<int> sweep_iters{1, 3, 5};
  /// Strategies drawn in the per-episode curves.
  std::vector<StrategyKind> curve_strategies;

  /// Every default materialized.
  static RunConfig defaults();
  const StrategyConfig& strategy(StrategyKind kind) const {
    return strategies.at(static_cast<std::size_t>(kind));
  }
};

/// Strict parse: unknown keys raise ConfigError, omitted keys take defaults.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical form with every key present.
std::string run_config_json(const RunConfig& cfg);

/// Hash of everything that determines results; the output directory is
/// excluded.
std::uint64_t config_hash(const RunConfig& cfg);
/// Hash of the sections that shape pre-training.
std::uint64_t pretrain_hash(const RunConfig& cfg);
/// Hash of the sections that shape the validation grid.
std::uint64_t strategy_hash(const RunConfig& cfg);

/// The full validation grid in report order.
std::vector<StrategyConfig> validation_grid(const RunConfig& cfg);

std::string precision_name(Precision p);

}  // namespace oasis
