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

#include "oasis/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "oasis/error.hpp"
#include "oasis/json_io.hpp"
#include "oasis/protocol.hpp"

namespace oasis {

using nlohmann::json;

namespace {

const std::vector<StrategyKind> kCurveDefaults = {
    StrategyKind::kNA,  StrategyKind::kNPl,       StrategyKind::kCPl,
    StrategyKind::kCPlSr, StrategyKind::kClassRPl, StrategyKind::kOracleRPl};

json kinds_json(const std::vector<StrategyKind>& kinds) {
  json a = json::array();
  for (StrategyKind k : kinds) a.push_back(std::string(strategy_name(k)));
  return a;
}

std::vector<StrategyKind> kinds_from_json(const json& j, const char* where) {
  if (!j.is_array()) throw Error(ErrorKind::kConfig, std::string(where) + ": expected a list");
  std::vector<StrategyKind> out;
  for (const json& s : j) {
    const StrategyKind k = parse_strategy(s.get<std::string>());
    if (std::find(out.begin(), out.end(), k) != out.end()) {
      throw Error(ErrorKind::kConfig, std::string(where) + ": duplicate " + s.get<std::string>());
    }
    out.push_back(k);
  }
  return out;
}

json world_json(const WorldConfig& w) {
  return json{{"height", w.height},
              {"width", w.width},
              {"classes", kNumClasses},
              {"train_frames", w.train_frames},
              {"val_episodes", w.val_episodes},
              {"deploy_episodes", w.deploy_episodes},
              {"subsequences", w.subsequences},
              {"frames_per_subsequence", w.frames_per_subsequence},
              {"severity", w.severity},
              {"source_memory", w.source_memory}};
}

json pretrain_json(const RunConfig& c) {
  const PretrainConfig& p = c.pretrain;
  return json{{"epochs", p.epochs},
              {"learning_rate", p.optimizer.learning_rate},
              {"sgd_momentum", p.optimizer.sgd_momentum},
              {"weight_decay", p.optimizer.weight_decay},
              {"bn_momentum", p.bn_momentum},
              {"net_width", p.net.width},
              {"dr_levels", c.dr_levels}};
}

json strategies_json(const RunConfig& c) {
  json j = json::object();
  for (const StrategyConfig& s : c.strategies) {
    json e = s;
    e.erase("strategy");
    j[std::string(strategy_name(s.kind))] = std::move(e);
  }
  return j;
}

json validation_json(const RunConfig& c) {
  return json{{"strategies", kinds_json(c.validate_strategies)},
              {"adapt_iters", c.grid_adapt_iters},
              {"grid_on_all_checkpoints", c.grid_on_all_checkpoints}};
}

json deploy_json(const RunConfig& c) {
  return json{{"sweep_strategy", std::string(strategy_name(c.sweep_strategy))},
              {"sweep_iters", c.sweep_iters},
              {"curve_strategies", kinds_json(c.curve_strategies)}};
}

json to_document(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"precision", precision_name(c.precision)},
              {"output", c.output},
              {"world", world_json(c.world)},
              {"pretrain", pretrain_json(c)},
              {"strategies", strategies_json(c)},
              {"validation", validation_json(c)},
              {"deploy", deploy_json(c)}};
}

template <typename V>
void read(const json& j, const char* key, V& field) {
  if (j.contains(key)) field = j.at(key).get<V>();
}

void check_positive(long v, const char* what) {
  if (v < 1) throw Error(ErrorKind::kConfig, std::string(what) + " must be >= 1");
}

void check_iters(const std::vector<int>& iters, const char* what) {
  if (iters.empty()) throw Error(ErrorKind::kConfig, std::string(what) + " must not be empty");
  for (int i : iters) check_positive(i, what);
}

}  // namespace

std::string precision_name(Precision p) { return p == Precision::kFloat ? "float" : "double"; }

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (StrategyKind k : all_strategies()) c.strategies.push_back(StrategyConfig::defaults(k));
  c.validate_strategies = all_strategies();
  c.curve_strategies = kCurveDefaults;
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig c = RunConfig::defaults();
  try {
    const json j = json::parse(text);
    reject_unknown_keys(j, {"seed", "precision", "output", "world", "pretrain", "strategies",
                            "validation", "deploy"},
                        "config");
    read(j, "seed", c.seed);
    if (j.contains("precision")) {
      const std::string p = j.at("precision").get<std::string>();
      if (p == "double") c.precision = Precision::kDouble;
      else if (p == "float") c.precision = Precision::kFloat;
      else throw Error(ErrorKind::kConfig, "precision must be 'double' or 'float'");
    }
    read(j, "output", c.output);

    if (j.contains("world")) {
      const json& w = j.at("world");
      reject_unknown_keys(w, {"height", "width", "classes", "train_frames", "val_episodes",
                              "deploy_episodes", "subsequences", "frames_per_subsequence",
                              "severity", "source_memory"},
                          "world");
      read(w, "height", c.world.height);
      read(w, "width", c.world.width);
      if (w.contains("classes") && w.at("classes").get<int>() != kNumClasses) {
        throw Error(ErrorKind::kConfig, "world.classes must be " + std::to_string(kNumClasses));
      }
      read(w, "train_frames", c.world.train_frames);
      read(w, "val_episodes", c.world.val_episodes);
      read(w, "deploy_episodes", c.world.deploy_episodes);
      read(w, "subsequences", c.world.subsequences);
      read(w, "frames_per_subsequence", c.world.frames_per_subsequence);
      read(w, "severity", c.world.severity);
      read(w, "source_memory", c.world.source_memory);
    }
    check_positive(static_cast<long>(c.world.height), "world.height");
    check_positive(static_cast<long>(c.world.width), "world.width");
    check_positive(c.world.train_frames, "world.train_frames");
    check_positive(c.world.val_episodes, "world.val_episodes");
    check_positive(c.world.deploy_episodes, "world.deploy_episodes");
    check_positive(c.world.subsequences, "world.subsequences");
    check_positive(c.world.frames_per_subsequence, "world.frames_per_subsequence");
    check_positive(c.world.source_memory, "world.source_memory");
    if (!(c.world.severity >= 0.0)) throw Error(ErrorKind::kConfig, "world.severity must be >= 0");

    if (j.contains("pretrain")) {
      const json& p = j.at("pretrain");
      reject_unknown_keys(p, {"epochs", "learning_rate", "sgd_momentum", "weight_decay",
                              "bn_momentum", "net_width", "dr_levels"},
                          "pretrain");
      read(p, "epochs", c.pretrain.epochs);
      read(p, "learning_rate", c.pretrain.optimizer.learning_rate);
      read(p, "sgd_momentum", c.pretrain.optimizer.sgd_momentum);
      read(p, "weight_decay", c.pretrain.optimizer.weight_decay);
      read(p, "bn_momentum", c.pretrain.bn_momentum);
      read(p, "net_width", c.pretrain.net.width);
      read(p, "dr_levels", c.dr_levels);
    }
    if (c.pretrain.epochs < 0) throw Error(ErrorKind::kConfig, "pretrain.epochs must be >= 0");
    check_positive(static_cast<long>(c.pretrain.net.width), "pretrain.net_width");
    if (!(c.pretrain.optimizer.learning_rate >= 0.0)) {
      throw Error(ErrorKind::kConfig, "pretrain.learning_rate must be >= 0");
    }
    for (int k : c.dr_levels) {
      if (k < 1 || k > kNumDrTransforms) {
        throw Error(ErrorKind::kConfig, "pretrain.dr_levels entries must lie in [1, 6]");
      }
    }

    if (j.contains("strategies")) {
      const json& s = j.at("strategies");
      if (!s.is_object()) throw Error(ErrorKind::kConfig, "strategies: expected an object");
      for (const auto& [name, body] : s.items()) {
        const StrategyKind kind = parse_strategy(name);
        if (!body.is_object()) throw Error(ErrorKind::kConfig, "strategies." + name + ": expected an object");
        if (body.contains("strategy")) {
          throw Error(ErrorKind::kConfig, "strategies." + name + ": unknown key 'strategy'");
        }
        json full = body;
        full["strategy"] = name;
        c.strategies[static_cast<std::size_t>(kind)] = full.get<StrategyConfig>();
      }
    }

    if (j.contains("validation")) {
      const json& v = j.at("validation");
      reject_unknown_keys(v, {"strategies", "adapt_iters", "grid_on_all_checkpoints"},
                          "validation");
      if (v.contains("strategies")) {
        c.validate_strategies = kinds_from_json(v.at("strategies"), "validation.strategies");
      }
      read(v, "adapt_iters", c.grid_adapt_iters);
      read(v, "grid_on_all_checkpoints", c.grid_on_all_checkpoints);
    }
    check_iters(c.grid_adapt_iters, "validation.adapt_iters");
    if (std::find(c.validate_strategies.begin(), c.validate_strategies.end(), StrategyKind::kNA) ==
        c.validate_strategies.end()) {
      throw Error(ErrorKind::kConfig, "validation.strategies must include NA, the deploy baseline");
    }

    if (j.contains("deploy")) {
      const json& d = j.at("deploy");
      reject_unknown_keys(d, {"sweep_strategy", "sweep_iters", "curve_strategies"}, "deploy");
      if (d.contains("sweep_strategy")) {
        c.sweep_strategy = parse_strategy(d.at("sweep_strategy").get<std::string>());
      }
      read(d, "sweep_iters", c.sweep_iters);
      if (d.contains("curve_strategies")) {
        c.curve_strategies = kinds_from_json(d.at("curve_strategies"), "deploy.curve_strategies");
      }
    }
    if (!c.sweep_iters.empty()) check_iters(c.sweep_iters, "deploy.sweep_iters");
    if (!c.sweep_iters.empty() && !is_tent(c.sweep_strategy) && !is_pl(c.sweep_strategy)) {
      throw Error(ErrorKind::kConfig, "deploy.sweep_strategy must be a TENT or PL variant");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_json(const RunConfig& cfg) { return to_document(cfg).dump(2) + "\n"; }

std::uint64_t config_hash(const RunConfig& cfg) {
  json j = to_document(cfg);
  j.erase("output");
  return fnv1a(j.dump());
}

std::uint64_t pretrain_hash(const RunConfig& cfg) {
  const json j{{"seed", cfg.seed},
               {"precision", precision_name(cfg.precision)},
               {"world", world_json(cfg.world)},
               {"pretrain", pretrain_json(cfg)}};
  return fnv1a(j.dump());
}

std::uint64_t strategy_hash(const RunConfig& cfg) {
  const json j{{"strategies", strategies_json(cfg)}, {"validation", validation_json(cfg)}};
  return fnv1a(j.dump());
}

std::vector<StrategyConfig> validation_grid(const RunConfig& cfg) {
  std::vector<StrategyConfig> grid;
  for (StrategyKind k : cfg.validate_strategies) {
    for (const StrategyConfig& c : default_grid(cfg.strategy(k), cfg.grid_adapt_iters)) {
      grid.push_back(c);
    }
  }
  return grid;
}

}  // namespace oasis
