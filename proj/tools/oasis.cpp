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

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "oasis/config.hpp"
#include "oasis/error.hpp"
#include "oasis/pipeline.hpp"

namespace {

// One line on stderr: "<ErrorClass>: <message>".
int fail(std::string_view kind, std::string message, int code) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::fprintf(stderr, "%.*s: %s\n", static_cast<int>(kind.size()), kind.data(), message.c_str());
  return code;
}

int exit_code(oasis::ErrorKind kind) {
  switch (kind) {
    case oasis::ErrorKind::kConfig:
      return 2;
    case oasis::ErrorKind::kIo:
      return 3;
    case oasis::ErrorKind::kState:
      return 4;
    case oasis::ErrorKind::kTamper:
      return 5;
    case oasis::ErrorKind::kNumeric:
      return 6;
    case oasis::ErrorKind::kShape:
      return 7;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Per-frame tensors are a few hundred kB; keeping them off mmap avoids a
  // page-fault storm on every allocation.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif

  CLI::App app{"OASIS online adaptation engine"};
  app.require_subcommand(1);
  std::string config_path;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  for (const char* name : {"pretrain", "validate", "deploy", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 1024));
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out, "override the output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 64);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    oasis::RunConfig cfg = oasis::load_run_config(config_path);
    if (seed && *seed != cfg.seed) {
      std::cerr << "override seed: " << cfg.seed << " -> " << *seed << "\n";
      cfg.seed = *seed;
    }
    if (out && *out != cfg.output) {
      std::cerr << "override output: " << cfg.output << " -> " << *out << "\n";
      cfg.output = *out;
    }
    if (command == "pretrain") {
      oasis::run_pretrain(cfg, jobs, std::cerr);
    } else if (command == "validate") {
      oasis::run_validate(cfg, jobs, std::cerr);
    } else if (command == "deploy") {
      oasis::run_deploy(cfg, jobs, std::cerr);
    } else {
      oasis::run_report(cfg, std::cerr);
    }
  } catch (const oasis::Error& e) {
    return fail(oasis::error_kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return fail("InternalError", e.what(), 1);
  }
  return 0;
}
