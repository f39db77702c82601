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

#include <filesystem>
#include <iosfwd>
#include <string>

#include "oasis/config.hpp"
#include "oasis/protocol.hpp"

namespace oasis {

/// Layout of a run directory.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path pretrain_dir() const { return root / "pretrain"; }
  std::filesystem::path checkpoint(const std::string& name) const {
    return pretrain_dir() / (name + ".ckpt");
  }
  std::filesystem::path validate_dir() const { return root / "validate"; }
  std::filesystem::path validation_report() const {
    return validate_dir() / "validation_report.json";
  }
  std::filesystem::path deploy_dir() const { return root / "deploy"; }
  std::filesystem::path deploy_index() const { return deploy_dir() / "runs.json"; }
  std::filesystem::path final_report() const { return deploy_dir() / "final_report.json"; }
};

/// "oasis <version> config=<hash> seed=<seed>".
std::string provenance(const RunConfig& cfg);

/// Checkpoint names in training order: "erm", then "dr<k>".
std::vector<std::string> checkpoint_names(const RunConfig& cfg);

/// Each phase reads only files written by the previous ones under cfg.output.
/// `log` receives progress lines.
void run_pretrain(const RunConfig& cfg, int jobs, std::ostream& log);
void run_validate(const RunConfig& cfg, int jobs, std::ostream& log);
void run_deploy(const RunConfig& cfg, int jobs, std::ostream& log);
/// Rebuilds the final report, tables, curves and timing from deploy records.
void run_report(const RunConfig& cfg, std::ostream& log);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace oasis
