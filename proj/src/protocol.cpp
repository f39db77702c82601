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

#include "oasis/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "oasis/error.hpp"
#include "oasis/json_io.hpp"

namespace oasis {

using nlohmann::json;

// ---- JSON bridge ------------------------------------------------------------

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorKind::kConfig, std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

void to_json(json& j, const StrategyConfig& cfg) {
  j = json{{"strategy", std::string(strategy_name(cfg.kind))},
           {"learning_rate", cfg.learning_rate},
           {"adapt_iters", cfg.adapt_iters},
           {"bn_momentum", cfg.bn_momentum},
           {"sr_weight", cfg.sr_weight},
           {"sr_batch", cfg.sr_batch},
           {"reset_window", cfg.reset_window},
           {"reset_threshold", cfg.reset_threshold},
           {"sgd_momentum", cfg.sgd_momentum},
           {"weight_decay", cfg.weight_decay}};
}

void from_json(const json& j, StrategyConfig& cfg) {
  reject_unknown_keys(j,
                      {"strategy", "learning_rate", "adapt_iters", "bn_momentum", "sr_weight",
                       "sr_batch", "reset_window", "reset_threshold", "sgd_momentum",
                       "weight_decay"},
                      "strategy config");
  if (!j.contains("strategy")) throw Error(ErrorKind::kConfig, "strategy config: missing 'strategy'");
  try {
    StrategyConfig c = StrategyConfig::defaults(parse_strategy(j.at("strategy").get<std::string>()));
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    read("learning_rate", c.learning_rate);
    read("adapt_iters", c.adapt_iters);
    read("bn_momentum", c.bn_momentum);
    read("sr_weight", c.sr_weight);
    read("sr_batch", c.sr_batch);
    read("reset_window", c.reset_window);
    read("reset_threshold", c.reset_threshold);
    read("sgd_momentum", c.sgd_momentum);
    read("weight_decay", c.weight_decay);
    c.validate();
    cfg = c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("strategy config: ") + e.what());
  }
}

// ---- episodes -----------------------------------------------------------------

EpisodeFrames render_episode(const EpisodeSpec& spec, std::size_t height, std::size_t width) {
  EpisodeFrames ep;
  ep.spec = spec;
  const int n = spec.frame_count();
  ep.frames.reserve(static_cast<std::size_t>(n));
  ep.subsequence.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ep.frames.push_back(render_episode_frame(spec, i, height, width));
    ep.subsequence.push_back(static_cast<int>(spec.locate(i).first));
  }
  return ep;
}

template <typename T>
std::vector<Mask> predict_episode(const EpisodeFrames& episode, const SegNet<T>& theta0) {
  std::vector<Mask> out;
  out.reserve(episode.frames.size());
  for (const LabeledFrame& f : episode.frames) {
    out.push_back(argmax_mask(predict_probs(theta0, f.image, BnSetting::use_running()),
                              f.image.height, f.image.width));
  }
  return out;
}

template <typename T>
EpisodeRun run_episode(const EpisodeFrames& episode, const StrategyConfig& cfg,
                       std::shared_ptr<const SegNet<T>> theta0,
                       std::shared_ptr<const SourceMemory> memory, std::uint64_t seed,
                       const EpisodeOptions<T>& options) {
  if (!theta0) throw Error(ErrorKind::kState, "run_episode: no pre-trained model");
  cfg.validate();
  const std::size_t n = episode.frames.size();
  if (episode.subsequence.size() != n) {
    throw Error(ErrorKind::kShape, "run_episode: sub-sequence index does not match frames");
  }
  if (options.theta0_predictions && options.theta0_predictions->size() != n) {
    throw Error(ErrorKind::kShape, "run_episode: cached predictions do not match frames");
  }
  for (const LabeledFrame& f : episode.frames) {
    if (static_cast<std::size_t>(f.classes) != theta0->shape().classes) {
      throw Error(ErrorKind::kShape, "run_episode: model and episode class counts differ");
    }
  }

  const std::string label =
      options.label.empty() ? std::string(strategy_name(cfg.kind)) : options.label;
  AdaptState<T> state = make_adapt_state(std::move(theta0), std::move(memory), seed);
  EpisodeRun run;
  run.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LabeledFrame& f = episode.frames[i];
    FrameRecord rec;
    rec.episode_id = episode.spec.id;
    rec.frame_index = static_cast<int>(i);
    rec.environment = std::string(environment_name(f.domain.environment));
    rec.condition = std::string(condition_name(f.domain.condition));
    rec.strategy = label;
    rec.n_classes_gt = count_classes(f.mask, f.classes);

    FrameInput in;
    in.image = &f.image;
    // Ground truth reaches the adapter only for the oracle reset.
    in.ground_truth = is_oracle_reset(cfg.kind) ? &f.mask : nullptr;
    in.theta0_prediction = options.theta0_predictions ? &(*options.theta0_predictions)[i] : nullptr;
    in.classes = f.classes;

    const auto start = std::chrono::steady_clock::now();
    try {
      const StepResult r = adapt_step(state, in, cfg);
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      rec.miou = frame_miou(r.prediction, f.mask, f.classes);
      rec.n_classes_pred = count_classes(r.prediction, f.classes);
      rec.reset_fired = r.reset_fired;
      if (options.keep_overlaps) run.overlaps.push_back(class_overlap(r.prediction, f.mask, f.classes));
    } catch (const Error& e) {
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      rec.miou = 0.0;
      run.records.push_back(rec);
      run.summary = summarize(run.records, episode.spec.id, label, episode.subsequence,
                              static_cast<int>(episode.spec.subsequences.size()));
      run.summary.failed = true;
      run.summary.failure = std::string(error_kind_name(e.kind())) + " at frame " +
                            std::to_string(i) + ": " + e.what();
      return run;
    }
    run.records.push_back(rec);
    if (options.observer) options.observer(static_cast<int>(i), state);
  }
  run.summary = summarize(run.records, episode.spec.id, label, episode.subsequence,
                          static_cast<int>(episode.spec.subsequences.size()));
  return run;
}

std::vector<double> subsequence_means(const std::vector<FrameRecord>& records,
                                      const std::vector<int>& subsequence, int count) {
  std::vector<double> sum(static_cast<std::size_t>(std::max(count, 0)), 0.0);
  std::vector<int> n(sum.size(), 0);
  for (const FrameRecord& r : records) {
    const auto idx = static_cast<std::size_t>(r.frame_index);
    if (idx >= subsequence.size()) throw Error(ErrorKind::kShape, "frame index out of range");
    const auto s = static_cast<std::size_t>(subsequence[idx]);
    if (s >= sum.size()) throw Error(ErrorKind::kShape, "sub-sequence index out of range");
    sum[s] += r.miou;
    ++n[s];
  }
  for (std::size_t s = 0; s < sum.size(); ++s) {
    if (n[s] > 0) sum[s] /= n[s];
  }
  return sum;
}

EpisodeSummary summarize(const std::vector<FrameRecord>& records, const std::string& episode_id,
                         const std::string& strategy, const std::vector<int>& subsequence,
                         int subsequence_count) {
  EpisodeSummary s;
  s.episode_id = episode_id;
  s.strategy = strategy;
  double total = 0.0;
  for (const FrameRecord& r : records) total += r.miou;
  s.mean_miou = records.empty() ? 0.0 : total / static_cast<double>(records.size());
  s.subsequence_miou = subsequence_means(records, subsequence, subsequence_count);
  return s;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double total = 0.0;
  for (double v : values) total += v;
  out.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::vector<double> relative_improvements(const std::vector<double>& strategy,
                                          const std::vector<double>& baseline) {
  if (strategy.size() != baseline.size()) {
    throw Error(ErrorKind::kShape, "relative_improvements: episode counts differ");
  }
  std::vector<double> out(strategy.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(baseline[i] > 0.0)) throw Error(ErrorKind::kNumeric, "baseline mIoU is zero");
    out[i] = (strategy[i] - baseline[i]) / baseline[i];
  }
  return out;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            task(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

// ---- validation ----------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Keeps decade steps like 1e-4 * 10 free of representation noise.
double round_sig(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

GridEntry make_entry(const std::string& checkpoint, const StrategyConfig& cfg,
                     const std::vector<EpisodeRun>& runs, std::size_t first, std::size_t count) {
  GridEntry e;
  e.checkpoint = checkpoint;
  e.config = cfg;
  for (std::size_t i = first; i < first + count; ++i) {
    e.episode_miou.push_back(runs[i].summary.mean_miou);
    e.failed = e.failed || runs[i].summary.failed;
  }
  e.miou = mean_std(e.episode_miou);
  return e;
}

}  // namespace

std::uint64_t task_seed(std::uint64_t seed, const EpisodeSpec& episode) {
  return splitmix64(seed ^ splitmix64(episode.seed));
}

template <typename T>
std::vector<EpisodeRun> run_tasks(const std::vector<RunTask>& tasks,
                                  const std::vector<NamedModel<T>>& models,
                                  const std::vector<EpisodeFrames>& episodes,
                                  const std::vector<std::vector<std::vector<Mask>>>& predictions,
                                  std::uint64_t seed, int jobs) {
  std::vector<EpisodeRun> out(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const RunTask& t = tasks[i];
    const NamedModel<T>& m = models.at(t.model);
    const EpisodeFrames& ep = episodes.at(t.episode);
    EpisodeOptions<T> opt;
    if (t.model < predictions.size() && t.episode < predictions[t.model].size() &&
        !predictions[t.model][t.episode].empty()) {
      opt.theta0_predictions = &predictions[t.model][t.episode];
    }
    out[i] = run_episode<T>(ep, t.config, m.model, m.memory, task_seed(seed, ep.spec), opt);
  });
  return out;
}

const GridEntry& ValidationReport::winner(StrategyKind kind) const {
  for (std::size_t idx : winners) {
    if (grid.at(idx).config.kind == kind) return grid[idx];
  }
  throw Error(ErrorKind::kState, "no validated winner for " + std::string(strategy_name(kind)));
}

std::size_t select_winner(const std::vector<GridEntry>& entries,
                          const std::vector<std::size_t>& candidates) {
  if (candidates.empty()) throw Error(ErrorKind::kConfig, "empty hyperparameter grid");
  std::size_t best = kNoWinner;
  for (std::size_t idx : candidates) {
    const GridEntry& e = entries.at(idx);
    if (e.failed) continue;
    if (best == kNoWinner) {
      best = idx;
      continue;
    }
    const GridEntry& b = entries[best];
    if (e.miou.mean > b.miou.mean ||
        (e.miou.mean == b.miou.mean &&
         (e.config.learning_rate < b.config.learning_rate ||
          (e.config.learning_rate == b.config.learning_rate &&
           e.config.adapt_iters < b.config.adapt_iters)))) {
      best = idx;
    }
  }
  return best;
}

std::vector<StrategyConfig> default_grid(const StrategyConfig& base,
                                         const std::vector<int>& adapt_iters) {
  const StrategyKind kind = base.kind;
  std::vector<StrategyConfig> out;
  if (kind == StrategyKind::kNA || is_style(kind)) {
    out.push_back(base);
    return out;
  }
  if (is_bn(kind)) {
    for (double a : {base.bn_momentum / 10.0, base.bn_momentum,
                     std::min(1.0, base.bn_momentum * 10.0)}) {
      StrategyConfig c = base;
      c.bn_momentum = round_sig(a);
      out.push_back(c);
    }
    return out;
  }
  const std::vector<int> iters = adapt_iters.empty() ? std::vector<int>{1} : adapt_iters;
  for (double lr : {base.learning_rate / 10.0, base.learning_rate, base.learning_rate * 10.0}) {
    for (int it : iters) {
      StrategyConfig c = base;
      c.learning_rate = round_sig(lr);
      c.adapt_iters = it;
      out.push_back(c);
    }
  }
  return out;
}

template <typename T>
ValidationReport validate(
    const ValidationPlan<T>& plan, const std::vector<EpisodeFrames>& episodes,
    const std::function<void(const std::string&, const StrategyConfig&, const EpisodeRun&)>&
        on_run) {
  if (plan.checkpoints.empty()) throw Error(ErrorKind::kConfig, "validate: no checkpoints");
  if (plan.grid.empty()) throw Error(ErrorKind::kConfig, "validate: empty grid");
  if (episodes.empty()) throw Error(ErrorKind::kConfig, "validate: no episodes");
  for (const StrategyConfig& c : plan.grid) c.validate();

  const std::size_t models = plan.checkpoints.size();
  const std::size_t eps = episodes.size();
  std::vector<std::vector<std::vector<Mask>>> predictions(models,
                                                          std::vector<std::vector<Mask>>(eps));
  parallel_for(models * eps, plan.jobs, [&](std::size_t i) {
    predictions[i / eps][i % eps] =
        predict_episode(episodes[i % eps], *plan.checkpoints[i / eps].model);
  });

  ValidationReport report;
  report.seed = plan.seed;

  // Pre-trained models without adaptation.
  const StrategyConfig na = StrategyConfig::defaults(StrategyKind::kNA);
  std::vector<RunTask> tasks;
  for (std::size_t m = 0; m < models; ++m) {
    for (std::size_t e = 0; e < eps; ++e) tasks.push_back({m, na, e});
  }
  std::vector<EpisodeRun> runs =
      run_tasks(tasks, plan.checkpoints, episodes, predictions, plan.seed, plan.jobs);
  std::size_t selected = kNoWinner;
  for (std::size_t m = 0; m < models; ++m) {
    const std::string& name = plan.checkpoints[m].name;
    if (on_run) {
      for (std::size_t e = 0; e < eps; ++e) on_run(name, na, runs[m * eps + e]);
    }
    report.pretraining.push_back(make_entry(name, na, runs, m * eps, eps));
    const GridEntry& entry = report.pretraining.back();
    if (!entry.failed &&
        (selected == kNoWinner || entry.miou.mean > report.pretraining[selected].miou.mean)) {
      selected = m;
    }
  }
  if (selected == kNoWinner) throw Error(ErrorKind::kState, "validate: every checkpoint failed");
  report.selected_checkpoint = plan.checkpoints[selected].name;

  std::vector<std::size_t> grid_models;
  for (std::size_t m = 0; m < models; ++m) {
    if (plan.grid_on_all_checkpoints || m == selected) grid_models.push_back(m);
    else predictions[m].clear();
  }

  tasks.clear();
  for (std::size_t m : grid_models) {
    for (const StrategyConfig& c : plan.grid) {
      for (std::size_t e = 0; e < eps; ++e) tasks.push_back({m, c, e});
    }
  }
  runs = run_tasks(tasks, plan.checkpoints, episodes, predictions, plan.seed, plan.jobs);
  std::size_t at = 0;
  for (std::size_t m : grid_models) {
    const std::string& name = plan.checkpoints[m].name;
    for (const StrategyConfig& c : plan.grid) {
      if (on_run) {
        for (std::size_t e = 0; e < eps; ++e) on_run(name, c, runs[at + e]);
      }
      report.grid.push_back(make_entry(name, c, runs, at, eps));
      at += eps;
    }
  }

  for (StrategyKind kind : all_strategies()) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < report.grid.size(); ++i) {
      if (report.grid[i].config.kind == kind &&
          report.grid[i].checkpoint == report.selected_checkpoint) {
        candidates.push_back(i);
      }
    }
    if (candidates.empty()) continue;
    const std::size_t w = select_winner(report.grid, candidates);
    if (w != kNoWinner) report.winners.push_back(w);
  }
  report.winners_digest = winners_hash(winner_configs(report));
  return report;
}

// ---- deploy ----------------------------------------------------------------------

FinalReport assemble_final_report(const std::vector<RunGroup>& groups,
                                  const std::vector<std::vector<FrameRecord>>& records,
                                  const std::vector<EpisodeSpec>& episodes) {
  if (groups.size() != records.size()) {
    throw Error(ErrorKind::kShape, "assemble_final_report: one record set per group expected");
  }
  std::vector<std::vector<int>> subsequence(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (int i = 0; i < episodes[e].frame_count(); ++i) {
      subsequence[e].push_back(static_cast<int>(episodes[e].locate(i).first));
    }
  }

  std::vector<StrategyResult> results(groups.size());
  std::vector<std::vector<double>> means(groups.size());
  std::size_t baseline = kNoWinner;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const RunGroup& group = groups[g];
    std::map<std::string, std::vector<FrameRecord>> by_episode;
    for (const FrameRecord& r : records[g]) by_episode[r.episode_id].push_back(r);
    StrategyResult& res = results[g];
    res.config = group.config;
    res.label = group.label;
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      auto it = by_episode.find(episodes[e].id);
      if (it == by_episode.end()) {
        throw Error(ErrorKind::kState, "no records of " + group.label + " on " + episodes[e].id);
      }
      std::vector<FrameRecord>& recs = it->second;
      std::sort(recs.begin(), recs.end(), [](const FrameRecord& a, const FrameRecord& b) {
        return a.frame_index < b.frame_index;
      });
      EpisodeSummary s = summarize(recs, episodes[e].id, group.label, subsequence[e],
                                   static_cast<int>(episodes[e].subsequences.size()));
      if (static_cast<int>(recs.size()) < episodes[e].frame_count()) {
        s.failed = true;
        s.failure = "aborted after " + std::to_string(recs.size()) + " frames";
      }
      means[g].push_back(s.mean_miou);
      res.episodes.push_back(std::move(s));
    }
    res.miou = mean_std(means[g]);
    if (group.role == "strategy" && group.config.kind == StrategyKind::kNA) baseline = g;
  }
  if (baseline == kNoWinner) throw Error(ErrorKind::kState, "no NA baseline among deploy runs");

  FinalReport report;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    results[g].improvement = mean_std(relative_improvements(means[g], means[baseline]));
    if (groups[g].role == "pretraining") {
      report.pretraining.push_back(std::move(results[g]));
    } else if (groups[g].role == "strategy") {
      report.strategies.push_back(std::move(results[g]));
    } else if (groups[g].role == "sweep") {
      report.iteration_sweep.push_back(std::move(results[g]));
    } else {
      throw Error(ErrorKind::kConfig, "unknown run role '" + groups[g].role + "'");
    }
  }
  return report;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::uint64_t parse_hex64(const json& j) {
  const std::string s = j.get<std::string>();
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw Error(ErrorKind::kIo, "malformed hash '" + s + "'");
  }
  return std::stoull(s, nullptr, 16);
}

}  // namespace

std::uint64_t winners_hash(const std::vector<StrategyConfig>& winners) {
  std::string text;
  for (const StrategyConfig& c : winners) {
    text += json(c).dump();
    text += '\n';
  }
  return fnv1a(text);
}

std::vector<StrategyConfig> winner_configs(const ValidationReport& report) {
  std::vector<StrategyConfig> out;
  for (std::size_t idx : report.winners) out.push_back(report.grid.at(idx).config);
  return out;
}

void check_winners(const ValidationReport& report) {
  for (std::size_t idx : report.winners) {
    if (idx >= report.grid.size()) throw Error(ErrorKind::kTamper, "winner index out of range");
  }
  if (winners_hash(winner_configs(report)) != report.winners_digest) {
    throw Error(ErrorKind::kTamper, "validated winners were modified after validation");
  }
}

// ---- serialization -----------------------------------------------------------------

std::string describe_config(const StrategyConfig& c) {
  char buf[160];
  const StrategyKind k = c.kind;
  if (k == StrategyKind::kNA) return "-";
  if (k == StrategyKind::kNStRandom) return "style=random";
  if (k == StrategyKind::kNStNn) return "style=nearest";
  if (is_bn(k)) {
    std::snprintf(buf, sizeof buf, "alpha=%g", c.bn_momentum);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "eta=%g iters=%d", c.learning_rate, c.adapt_iters);
  std::string out = buf;
  if (uses_source_replay(k)) {
    std::snprintf(buf, sizeof buf, " gamma=%g", c.sr_weight);
    out += buf;
  }
  if (is_class_reset(k)) {
    std::snprintf(buf, sizeof buf, " K=%d psi=%g", c.reset_window, c.reset_threshold);
    out += buf;
  } else if (is_oracle_reset(k)) {
    std::snprintf(buf, sizeof buf, " psi=%g", c.reset_threshold);
    out += buf;
  }
  return out;
}

namespace {

json entry_json(const GridEntry& e) {
  return json{{"checkpoint", e.checkpoint}, {"config", e.config},
              {"episode_miou", e.episode_miou}, {"mean", e.miou.mean},
              {"std", e.miou.std}, {"failed", e.failed}};
}

GridEntry entry_from_json(const json& j) {
  reject_unknown_keys(j, {"checkpoint", "config", "episode_miou", "mean", "std", "failed"},
                      "grid entry");
  GridEntry e;
  e.checkpoint = j.at("checkpoint").get<std::string>();
  e.config = j.at("config").get<StrategyConfig>();
  e.episode_miou = j.at("episode_miou").get<std::vector<double>>();
  e.miou = {j.at("mean").get<double>(), j.at("std").get<double>()};
  e.failed = j.at("failed").get<bool>();
  return e;
}

json result_json(const StrategyResult& r) {
  json episodes = json::array();
  for (const EpisodeSummary& s : r.episodes) {
    json ej{{"episode_id", s.episode_id},
            {"mean_miou", s.mean_miou},
            {"subsequence_miou", s.subsequence_miou},
            {"failed", s.failed}};
    if (s.failed) ej["failure"] = s.failure;
    episodes.push_back(std::move(ej));
  }
  return json{{"label", r.label},
              {"config", r.config},
              {"improvement_mean", r.improvement.mean},
              {"improvement_std", r.improvement.std},
              {"miou_mean", r.miou.mean},
              {"miou_std", r.miou.std},
              {"episodes", std::move(episodes)}};
}

StrategyResult result_from_json(const json& j) {
  StrategyResult r;
  r.label = j.at("label").get<std::string>();
  r.config = j.at("config").get<StrategyConfig>();
  r.improvement = {j.at("improvement_mean").get<double>(), j.at("improvement_std").get<double>()};
  r.miou = {j.at("miou_mean").get<double>(), j.at("miou_std").get<double>()};
  for (const json& ej : j.at("episodes")) {
    EpisodeSummary s;
    s.episode_id = ej.at("episode_id").get<std::string>();
    s.strategy = r.label;
    s.mean_miou = ej.at("mean_miou").get<double>();
    s.subsequence_miou = ej.at("subsequence_miou").get<std::vector<double>>();
    s.failed = ej.at("failed").get<bool>();
    if (ej.contains("failure")) s.failure = ej.at("failure").get<std::string>();
    r.episodes.push_back(std::move(s));
  }
  return r;
}

template <typename F>
auto parse_document(const std::string& text, const char* kind, F&& body) {
  try {
    const json j = json::parse(text);
    if (!j.is_object() || j.value("kind", "") != kind) {
      throw Error(ErrorKind::kIo, std::string("not a ") + kind + " document");
    }
    return body(j);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string(kind) + ": " + e.what());
  }
}

std::string format(const char* fmt, double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::string validation_report_json(const ValidationReport& r) {
  json pre = json::array();
  for (const GridEntry& e : r.pretraining) pre.push_back(entry_json(e));
  json grid = json::array();
  for (const GridEntry& e : r.grid) grid.push_back(entry_json(e));
  json winners = json::array();
  for (std::size_t idx : r.winners) {
    winners.push_back(json{{"strategy", std::string(strategy_name(r.grid.at(idx).config.kind))},
                           {"index", idx},
                           {"config", r.grid[idx].config}});
  }
  const json doc{{"kind", "validation_report"},
                 {"engine_version", r.engine_version},
                 {"config_hash", hex64(r.config_hash)},
                 {"strategy_hash", hex64(r.strategy_hash)},
                 {"seed", r.seed},
                 {"pretraining", std::move(pre)},
                 {"selected_checkpoint", r.selected_checkpoint},
                 {"grid", std::move(grid)},
                 {"winners", std::move(winners)},
                 {"winners_digest", hex64(r.winners_digest)}};
  return doc.dump(2) + "\n";
}

ValidationReport parse_validation_report(const std::string& text) {
  return parse_document(text, "validation_report", [](const json& j) {
    ValidationReport r;
    r.engine_version = j.at("engine_version").get<std::string>();
    r.config_hash = parse_hex64(j.at("config_hash"));
    r.strategy_hash = parse_hex64(j.at("strategy_hash"));
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const json& e : j.at("pretraining")) r.pretraining.push_back(entry_from_json(e));
    r.selected_checkpoint = j.at("selected_checkpoint").get<std::string>();
    for (const json& e : j.at("grid")) r.grid.push_back(entry_from_json(e));
    for (const json& w : j.at("winners")) {
      const std::size_t idx = w.at("index").get<std::size_t>();
      if (idx >= r.grid.size()) throw Error(ErrorKind::kTamper, "winner index out of range");
      const StrategyConfig listed = w.at("config").get<StrategyConfig>();
      if (!(listed == r.grid[idx].config)) {
        throw Error(ErrorKind::kTamper, "winner " + w.at("strategy").get<std::string>() +
                                            " differs from its validated grid entry");
      }
      r.winners.push_back(idx);
    }
    r.winners_digest = parse_hex64(j.at("winners_digest"));
    return r;
  });
}

std::string validation_table(const ValidationReport& r) {
  std::ostringstream out;
  out << "Pre-trained model      val mIoU (NA)\n";
  for (const GridEntry& e : r.pretraining) {
    out << pad(e.checkpoint + (e.checkpoint == r.selected_checkpoint ? " *" : ""), 23)
        << format("%.4f +- %.4f", e.miou.mean, e.miou.std) << (e.failed ? "  failed" : "")
        << "\n";
  }
  out << "\nStrategy        Checkpoint  Setting                           val mIoU\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const GridEntry& e = r.grid[i];
    const bool won = std::find(r.winners.begin(), r.winners.end(), i) != r.winners.end();
    out << pad(std::string(strategy_name(e.config.kind)), 16) << pad(e.checkpoint, 12)
        << pad(describe_config(e.config), 34) << format("%.4f +- %.4f", e.miou.mean, e.miou.std)
        << (e.failed ? "  failed" : "") << (won ? "  *" : "") << "\n";
  }
  return out.str();
}

std::string final_report_json(const FinalReport& r) {
  auto list = [](const std::vector<StrategyResult>& v) {
    json a = json::array();
    for (const StrategyResult& s : v) a.push_back(result_json(s));
    return a;
  };
  const json doc{{"kind", "final_report"},
                 {"engine_version", r.engine_version},
                 {"config_hash", hex64(r.config_hash)},
                 {"seed", r.seed},
                 {"selected_checkpoint", r.selected_checkpoint},
                 {"pretraining", list(r.pretraining)},
                 {"strategies", list(r.strategies)},
                 {"iteration_sweep", list(r.iteration_sweep)}};
  return doc.dump(2) + "\n";
}

FinalReport parse_final_report(const std::string& text) {
  return parse_document(text, "final_report", [](const json& j) {
    FinalReport r;
    r.engine_version = j.at("engine_version").get<std::string>();
    r.config_hash = parse_hex64(j.at("config_hash"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.selected_checkpoint = j.at("selected_checkpoint").get<std::string>();
    for (const json& s : j.at("pretraining")) r.pretraining.push_back(result_from_json(s));
    for (const json& s : j.at("strategies")) r.strategies.push_back(result_from_json(s));
    for (const json& s : j.at("iteration_sweep")) r.iteration_sweep.push_back(result_from_json(s));
    return r;
  });
}

std::string final_report_table(const FinalReport& r) {
  std::ostringstream out;
  auto rows = [&](const std::vector<StrategyResult>& v) {
    for (const StrategyResult& s : v) {
      bool failed = false;
      for (const EpisodeSummary& e : s.episodes) failed = failed || e.failed;
      out << pad(s.label, 18) << pad(describe_config(s.config), 34)
          << pad(format("%+.2f%% +- %.2f", 100.0 * s.improvement.mean, 100.0 * s.improvement.std),
                 22)
          << format("%.4f +- %.4f", s.miou.mean, s.miou.std) << (failed ? "  failed" : "")
          << "\n";
    }
  };
  out << "Deploy episodes, model " << r.selected_checkpoint
      << "; improvement over NA per episode, mean +- std\n\n";
  out << "Strategy          Setting                           Improvement           mIoU\n";
  rows(r.strategies);
  if (!r.pretraining.empty()) {
    out << "\nPre-trained models without adaptation\n";
    rows(r.pretraining);
  }
  if (!r.iteration_sweep.empty()) {
    out << "\nIterations per frame\n";
    rows(r.iteration_sweep);
  }
  return out.str();
}

void write_records_csv(const std::filesystem::path& path, const std::string& provenance,
                       const std::vector<FrameRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "# " << provenance << "\n" << kRecordCsvHeader << "\n";
  char num[64];
  for (const FrameRecord& r : records) {
    out << r.episode_id << ',' << r.frame_index << ',' << r.environment << ',' << r.condition
        << ',' << r.strategy << ',';
    std::snprintf(num, sizeof num, "%.17g", r.miou);
    out << num << ',' << r.n_classes_pred << ',' << r.n_classes_gt << ','
        << (r.reset_fired ? 1 : 0) << ',';
    std::snprintf(num, sizeof num, "%.3f", r.wall_time_ms);
    out << num << "\n";
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

std::vector<FrameRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<FrameRecord> out;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kRecordCsvHeader) throw Error(ErrorKind::kIo, path.string() + ": bad header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) {
      throw Error(ErrorKind::kIo, path.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    }
    try {
      FrameRecord r;
      r.episode_id = f[0];
      r.frame_index = std::stoi(f[1]);
      r.environment = f[2];
      r.condition = f[3];
      r.strategy = f[4];
      r.miou = std::stod(f[5]);
      r.n_classes_pred = std::stoi(f[6]);
      r.n_classes_gt = std::stoi(f[7]);
      r.reset_fired = f[8] == "1";
      r.wall_time_ms = std::stod(f[9]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kIo, path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  if (!header) throw Error(ErrorKind::kIo, path.string() + ": missing header");
  return out;
}

std::string series_csv(const std::vector<Series>& series) {
  std::ostringstream out;
  out << "frame_index";
  std::size_t n = 0;
  for (const Series& s : series) {
    out << ',' << s.label;
    n = std::max(n, s.values.size());
  }
  out << "\n";
  char num[64];
  for (std::size_t i = 0; i < n; ++i) {
    out << i;
    for (const Series& s : series) {
      out << ',';
      if (i < s.values.size()) {
        std::snprintf(num, sizeof num, "%.17g", s.values[i]);
        out << num;
      }
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                           const std::vector<int>& boundaries) {
  constexpr double kW = 760, kH = 300, kLeft = 50, kRight = 150, kTop = 30, kBottom = 40;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  static const char* kColors[] = {"#000000", "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};
  std::size_t n = 1;
  for (const Series& s : series) n = std::max(n, s.values.size());
  const double xs = n > 1 ? pw / static_cast<double>(n - 1) : 0.0;
  char buf[160];
  std::ostringstream out;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                kW, kH);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"18\" font-size=\"13\">" << xml_escape(title)
      << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = kTop + ph * (1.0 - t / 4.0);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n",
                  kLeft, y, kLeft + pw, y, kLeft - 4, y + 4, t / 4.0);
    out << buf;
  }
  for (int b : boundaries) {
    const double x = kLeft + xs * b;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888888\" "
                  "stroke-dasharray=\"4 3\"/>\n",
                  x, kTop, x, kTop + ph);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">frame</text>"
                "<text x=\"12\" y=\"%.1f\" transform=\"rotate(-90 12 %.1f)\" "
                "text-anchor=\"middle\">mIoU</text>\n",
                kLeft + pw / 2, kH - 8, kTop + ph / 2, kTop + ph / 2);
  out << buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      const double v = std::clamp(series[k].values[i], 0.0, 1.0);
      std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", i ? " " : "", kLeft + xs * i,
                    kTop + ph * (1.0 - v));
      out << buf;
    }
    out << "\"/>\n";
    const double ly = kTop + 14.0 * k + 6;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>",
                  kLeft + pw + 10, ly, kLeft + pw + 28, ly, color);
    out << buf << "<text x=\"" << kLeft + pw + 32 << "\" y=\"" << ly + 4 << "\">"
        << xml_escape(series[k].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

#define OASIS_INSTANTIATE_PROTOCOL(T)                                                           \
  template std::vector<Mask> predict_episode<T>(const EpisodeFrames&, const SegNet<T>&);        \
  template EpisodeRun run_episode<T>(const EpisodeFrames&, const StrategyConfig&,               \
                                     std::shared_ptr<const SegNet<T>>,                          \
                                     std::shared_ptr<const SourceMemory>, std::uint64_t,        \
                                     const EpisodeOptions<T>&);                                 \
  template std::vector<EpisodeRun> run_tasks<T>(                                                \
      const std::vector<RunTask>&, const std::vector<NamedModel<T>>&,                           \
      const std::vector<EpisodeFrames>&, const std::vector<std::vector<std::vector<Mask>>>&,    \
      std::uint64_t, int);                                                                      \
  template ValidationReport validate<T>(                                                        \
      const ValidationPlan<T>&, const std::vector<EpisodeFrames>&,                              \
      const std::function<void(const std::string&, const StrategyConfig&, const EpisodeRun&)>&);

OASIS_INSTANTIATE_PROTOCOL(float)
OASIS_INSTANTIATE_PROTOCOL(double)

}  // namespace oasis
