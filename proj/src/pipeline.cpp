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

#include "oasis/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "oasis/error.hpp"
#include "oasis/json_io.hpp"
#include "oasis/pretrain.hpp"

namespace oasis {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string provenance(const RunConfig& cfg) {
  return std::string("oasis ") + kEngineVersion + " config=" + hex64(config_hash(cfg)) +
         " seed=" + std::to_string(cfg.seed);
}

std::vector<std::string> checkpoint_names(const RunConfig& cfg) {
  std::vector<std::string> names{"erm"};
  for (int k : cfg.dr_levels) names.push_back("dr" + std::to_string(k));
  return names;
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error(ErrorKind::kIo, "cannot create output directory " + dir.string());
  }
}

std::string checkpoint_provenance_for(const RunConfig& cfg) {
  return std::string("oasis ") + kEngineVersion + " pretrain=" + hex64(pretrain_hash(cfg)) +
         " seed=" + std::to_string(cfg.seed);
}

int dr_level(const RunConfig& cfg, std::size_t index) {
  return index == 0 ? 0 : cfg.dr_levels.at(index - 1);
}

std::string with_header(const std::string& prov, const std::string& body) {
  return "# " + prov + "\n" + body;
}

std::vector<EpisodeFrames> render_all(const std::vector<EpisodeSpec>& specs,
                                      const WorldConfig& world, int jobs) {
  std::vector<EpisodeFrames> out(specs.size());
  parallel_for(specs.size(), jobs, [&](std::size_t i) {
    out[i] = render_episode(specs[i], world.height, world.width);
  });
  return out;
}

template <typename T>
std::vector<NamedModel<T>> load_models(const RunConfig& cfg, const RunPaths& paths) {
  const std::vector<LabeledFrame> memory_frames = make_source_memory(cfg.world, cfg.seed);
  const std::string expected = checkpoint_provenance_for(cfg);
  std::vector<NamedModel<T>> models;
  for (const std::string& name : checkpoint_names(cfg)) {
    const fs::path path = paths.checkpoint(name);
    if (!fs::exists(path)) {
      throw Error(ErrorKind::kState, "missing checkpoint " + path.string() + "; run pretrain first");
    }
    if (checkpoint_provenance(path) != expected) {
      throw Error(ErrorKind::kState, path.string() +
                                         " was trained under a different configuration; "
                                         "run pretrain again");
    }
    auto model = std::make_shared<const SegNet<T>>(read_checkpoint<T>(path));
    auto memory = std::make_shared<const SourceMemory>(build_source_memory(memory_frames, *model));
    models.push_back({name, std::move(model), std::move(memory)});
  }
  return models;
}

std::string file_safe(const std::string& label) {
  std::string out = label;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_')) c = '_';
  }
  return out;
}

// ---- pretrain ---------------------------------------------------------------------

template <typename T>
void pretrain_impl(const RunConfig& cfg, int jobs, std::ostream& log) {
  const RunPaths paths{cfg.output};
  make_dir(paths.pretrain_dir());
  const std::string prov = provenance(cfg);
  write_text_file(paths.pretrain_dir() / "config.json", run_config_json(cfg));

  log << "rendering " << cfg.world.train_frames << " training frames\n";
  const std::vector<LabeledFrame> train = make_train_set(cfg.world, cfg.seed);
  const std::vector<std::string> names = checkpoint_names(cfg);
  std::vector<std::vector<EpochLog>> logs(names.size());
  std::mutex log_mutex;
  parallel_for(names.size(), jobs, [&](std::size_t i) {
    const int k = dr_level(cfg, i);
    const SegNet<T> model = pretrain<T>(
        train, cfg.pretrain, k, cfg.seed + 100 * static_cast<std::uint64_t>(k),
        [&](const EpochLog& e) {
          logs[i].push_back(e);
          std::lock_guard lock(log_mutex);
          log << names[i] << " epoch " << e.epoch << " loss " << e.mean_loss << "\n";
        });
    write_checkpoint(model, paths.checkpoint(names[i]), checkpoint_provenance_for(cfg));
  });

  std::ostringstream csv;
  csv << "model,dr_level,epoch,mean_loss\n";
  char num[64];
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (const EpochLog& e : logs[i]) {
      std::snprintf(num, sizeof num, "%.17g", e.mean_loss);
      csv << names[i] << ',' << dr_level(cfg, i) << ',' << e.epoch << ',' << num << "\n";
    }
  }
  write_text_file(paths.pretrain_dir() / "train_log.csv", with_header(prov, csv.str()));
}

// ---- validate -----------------------------------------------------------------------

template <typename T>
void validate_impl(const RunConfig& cfg, int jobs, std::ostream& log) {
  const RunPaths paths{cfg.output};
  const std::vector<NamedModel<T>> models = load_models<T>(cfg, paths);
  make_dir(paths.validate_dir() / "records");
  const std::string prov = provenance(cfg);
  write_text_file(paths.validate_dir() / "config.json", run_config_json(cfg));

  const std::vector<EpisodeSpec> specs = make_val_episodes(cfg.world, cfg.seed);
  write_text_file(paths.validate_dir() / "episodes.csv",
                  with_header(prov, episode_manifest(specs)));
  const std::vector<EpisodeFrames> episodes = render_all(specs, cfg.world, jobs);

  ValidationPlan<T> plan;
  plan.checkpoints = models;
  plan.grid = validation_grid(cfg);
  plan.grid_on_all_checkpoints = cfg.grid_on_all_checkpoints;
  plan.seed = cfg.seed;
  plan.jobs = jobs;
  log << "validating " << plan.grid.size() << " configurations on " << episodes.size()
      << " episodes\n";

  // Records grouped per (checkpoint, configuration), in first-seen order.
  std::vector<std::pair<std::string, std::vector<FrameRecord>>> groups;
  std::map<std::string, std::size_t> index;
  ValidationReport report = validate<T>(
      plan, episodes,
      [&](const std::string& checkpoint, const StrategyConfig& c, const EpisodeRun& run) {
        const std::string key = checkpoint + " " + std::string(strategy_name(c.kind)) + " " +
                                describe_config(c);
        auto [it, fresh] = index.emplace(key, groups.size());
        if (fresh) groups.push_back({key, {}});
        auto& recs = groups[it->second].second;
        recs.insert(recs.end(), run.records.begin(), run.records.end());
      });
  report.engine_version = kEngineVersion;
  report.config_hash = config_hash(cfg);
  report.strategy_hash = strategy_hash(cfg);

  char prefix[32];
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::snprintf(prefix, sizeof prefix, "%03zu_", g);
    write_records_csv(paths.validate_dir() / "records" / (prefix + file_safe(groups[g].first) + ".csv"),
                      prov + " run=" + groups[g].first, groups[g].second);
  }
  write_text_file(paths.validation_report(), validation_report_json(report));
  write_text_file(paths.validate_dir() / "validation_report.txt",
                  with_header(prov, validation_table(report)));
  log << "selected checkpoint " << report.selected_checkpoint << "\n";
}

// ---- deploy ----------------------------------------------------------------------------

template <typename T>
void deploy_impl(const RunConfig& cfg, int jobs, std::ostream& log) {
  const RunPaths paths{cfg.output};
  if (!fs::exists(paths.validation_report())) {
    throw Error(ErrorKind::kState, "missing " + paths.validation_report().string() +
                                       "; run validate first");
  }
  const ValidationReport report = parse_validation_report(read_text_file(paths.validation_report()));
  check_winners(report);
  if (report.strategy_hash != strategy_hash(cfg)) {
    throw Error(ErrorKind::kTamper,
                "strategy settings differ from the ones validated; run validate again");
  }
  if (report.config_hash != config_hash(cfg)) {
    throw Error(ErrorKind::kState, "configuration changed since validation; run validate again");
  }
  const std::vector<NamedModel<T>> models = load_models<T>(cfg, paths);
  std::size_t selected = models.size();
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (models[m].name == report.selected_checkpoint) selected = m;
  }
  if (selected == models.size()) {
    throw Error(ErrorKind::kState, "selected checkpoint " + report.selected_checkpoint + " not found");
  }

  make_dir(paths.deploy_dir() / "records");
  const std::string prov = provenance(cfg);
  write_text_file(paths.deploy_dir() / "config.json", run_config_json(cfg));
  const std::vector<EpisodeSpec> specs = make_deploy_episodes(cfg.world, cfg.seed);
  write_text_file(paths.deploy_dir() / "episodes.csv", with_header(prov, episode_manifest(specs)));
  const std::vector<EpisodeFrames> episodes = render_all(specs, cfg.world, jobs);

  // Winners run unchanged; the pre-trained models and the iteration sweep
  // are reported next to them.
  std::vector<RunGroup> groups;
  std::vector<std::size_t> group_model;
  const StrategyConfig na = StrategyConfig::defaults(StrategyKind::kNA);
  for (std::size_t m = 0; m < models.size(); ++m) {
    groups.push_back({"NA@" + models[m].name, "pretraining", models[m].name, na});
    group_model.push_back(m);
  }
  for (const StrategyConfig& w : winner_configs(report)) {
    groups.push_back({std::string(strategy_name(w.kind)), "strategy", report.selected_checkpoint, w});
    group_model.push_back(selected);
  }
  const auto sweep_base =
      std::find_if(report.winners.begin(), report.winners.end(), [&](std::size_t idx) {
        return report.grid[idx].config.kind == cfg.sweep_strategy;
      });
  if (sweep_base != report.winners.end()) {
    for (int it : cfg.sweep_iters) {
      StrategyConfig c = report.grid[*sweep_base].config;
      c.adapt_iters = it;
      groups.push_back({std::string(strategy_name(c.kind)) + "@iters=" + std::to_string(it),
                        "sweep", report.selected_checkpoint, c});
      group_model.push_back(selected);
    }
  }

  // Identical (model, config) pairs are run once.
  std::vector<std::size_t> source(groups.size());
  std::vector<RunTask> tasks;
  std::vector<std::size_t> first_task(groups.size(), 0);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    source[g] = g;
    for (std::size_t h = 0; h < g; ++h) {
      if (group_model[h] == group_model[g] && groups[h].config == groups[g].config) {
        source[g] = h;
        break;
      }
    }
    if (source[g] != g) continue;
    first_task[g] = tasks.size();
    for (std::size_t e = 0; e < episodes.size(); ++e) tasks.push_back({group_model[g], groups[g].config, e});
  }

  std::vector<std::vector<std::vector<Mask>>> predictions(
      models.size(), std::vector<std::vector<Mask>>(episodes.size()));
  parallel_for(models.size() * episodes.size(), jobs, [&](std::size_t i) {
    const std::size_t m = i / episodes.size(), e = i % episodes.size();
    predictions[m][e] = predict_episode(episodes[e], *models[m].model);
  });
  log << "deploying " << groups.size() << " run groups on " << episodes.size() << " episodes\n";
  const std::vector<EpisodeRun> runs = run_tasks(tasks, models, episodes, predictions, cfg.seed, jobs);

  json index_groups = json::array();
  char prefix[32];
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<FrameRecord> recs;
    const std::size_t base = first_task[source[g]];
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const EpisodeRun& run = runs[base + e];
      if (run.summary.failed) log << groups[g].label << " failed on " << specs[e].id << ": " << run.summary.failure << "\n";
      for (FrameRecord r : run.records) {
        r.strategy = groups[g].label;
        recs.push_back(std::move(r));
      }
    }
    std::snprintf(prefix, sizeof prefix, "%02zu_", g);
    const std::string file = std::string("records/") + prefix + file_safe(groups[g].label) + ".csv";
    write_records_csv(paths.deploy_dir() / file, prov + " run=" + groups[g].label, recs);
    index_groups.push_back(json{{"label", groups[g].label},
                                {"role", groups[g].role},
                                {"checkpoint", groups[g].checkpoint},
                                {"config", groups[g].config},
                                {"records", file}});
  }
  const json index{{"kind", "deploy_runs"},
                   {"engine_version", kEngineVersion},
                   {"config_hash", hex64(config_hash(cfg))},
                   {"seed", cfg.seed},
                   {"selected_checkpoint", report.selected_checkpoint},
                   {"groups", std::move(index_groups)}};
  write_text_file(paths.deploy_index(), index.dump(2) + "\n");
}

// ---- report -------------------------------------------------------------------------------

std::string timing_table(const std::string& prov, const std::vector<RunGroup>& groups,
                         const std::vector<std::vector<FrameRecord>>& records) {
  std::ostringstream out;
  out << "# " << prov << "\n";
  out << "label,role,frames,mean_wall_time_ms\n";
  char num[64];
  for (std::size_t g = 0; g < groups.size(); ++g) {
    double total = 0.0;
    for (const FrameRecord& r : records[g]) total += r.wall_time_ms;
    const double mean = records[g].empty() ? 0.0 : total / static_cast<double>(records[g].size());
    std::snprintf(num, sizeof num, "%.3f", mean);
    out << groups[g].label << ',' << groups[g].role << ',' << records[g].size() << ',' << num << "\n";
  }
  return out.str();
}

}  // namespace

void run_report(const RunConfig& cfg, std::ostream& log) {
  const RunPaths paths{cfg.output};
  if (!fs::exists(paths.deploy_index())) {
    throw Error(ErrorKind::kState, "missing " + paths.deploy_index().string() + "; run deploy first");
  }
  json index;
  try {
    index = json::parse(read_text_file(paths.deploy_index()));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, paths.deploy_index().string() + ": " + e.what());
  }
  if (index.value("kind", "") != "deploy_runs") {
    throw Error(ErrorKind::kIo, paths.deploy_index().string() + " is not a deploy index");
  }
  if (index.at("config_hash").get<std::string>() != hex64(config_hash(cfg))) {
    throw Error(ErrorKind::kState, "deploy records were produced under a different configuration");
  }

  std::vector<RunGroup> groups;
  std::vector<std::vector<FrameRecord>> records;
  try {
    for (const json& g : index.at("groups")) {
      groups.push_back({g.at("label").get<std::string>(), g.at("role").get<std::string>(),
                        g.at("checkpoint").get<std::string>(), g.at("config").get<StrategyConfig>()});
      records.push_back(read_records_csv(paths.deploy_dir() / g.at("records").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, paths.deploy_index().string() + ": " + e.what());
  }

  const std::vector<EpisodeSpec> specs = make_deploy_episodes(cfg.world, cfg.seed);
  FinalReport report = assemble_final_report(groups, records, specs);
  report.engine_version = kEngineVersion;
  report.config_hash = config_hash(cfg);
  report.seed = cfg.seed;
  report.selected_checkpoint = index.at("selected_checkpoint").get<std::string>();

  const std::string prov = provenance(cfg);
  write_text_file(paths.final_report(), final_report_json(report));
  write_text_file(paths.deploy_dir() / "final_report.txt", with_header(prov, final_report_table(report)));
  write_text_file(paths.deploy_dir() / "timing.csv", timing_table(prov, groups, records));

  make_dir(paths.deploy_dir() / "curves");
  for (const EpisodeSpec& spec : specs) {
    std::vector<Series> series;
    for (StrategyKind kind : cfg.curve_strategies) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].role != "strategy" || groups[g].config.kind != kind) continue;
        Series s{groups[g].label, std::vector<double>(static_cast<std::size_t>(spec.frame_count()), 0.0)};
        for (const FrameRecord& r : records[g]) {
          if (r.episode_id == spec.id && r.frame_index >= 0 && r.frame_index < spec.frame_count()) {
            s.values[static_cast<std::size_t>(r.frame_index)] = r.miou;
          }
        }
        series.push_back(std::move(s));
      }
    }
    std::vector<int> boundaries;
    int start = 0;
    for (std::size_t i = 0; i + 1 < spec.subsequences.size(); ++i) {
      start += spec.subsequences[i].frame_count;
      boundaries.push_back(start);
    }
    const fs::path base = paths.deploy_dir() / "curves" / file_safe(spec.id);
    write_text_file(base.string() + ".csv", with_header(prov, series_csv(series)));
    write_text_file(base.string() + ".svg",
                    "<!-- " + prov + " -->\n" + svg_line_chart("mIoU per frame, " + spec.id, series, boundaries));
  }
  log << "report written to " << paths.deploy_dir().string() << "\n";
}

void run_pretrain(const RunConfig& cfg, int jobs, std::ostream& log) {
  if (cfg.precision == Precision::kFloat) pretrain_impl<float>(cfg, jobs, log);
  else pretrain_impl<double>(cfg, jobs, log);
}

void run_validate(const RunConfig& cfg, int jobs, std::ostream& log) {
  if (cfg.precision == Precision::kFloat) validate_impl<float>(cfg, jobs, log);
  else validate_impl<double>(cfg, jobs, log);
}

void run_deploy(const RunConfig& cfg, int jobs, std::ostream& log) {
  if (cfg.precision == Precision::kFloat) deploy_impl<float>(cfg, jobs, log);
  else deploy_impl<double>(cfg, jobs, log);
  run_report(cfg, log);
}

}  // namespace oasis
