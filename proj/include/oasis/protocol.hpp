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
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "oasis/adapt.hpp"
#include "oasis/metrics.hpp"
#include "oasis/segnet.hpp"
#include "oasis/worldgen.hpp"

namespace oasis {

struct FrameRecord {
  std::string episode_id;
  int frame_index = 0;
  std::string environment;
  std::string condition;
  std::string strategy;
  double miou = 0.0;
  int n_classes_pred = 0;
  int n_classes_gt = 0;
  bool reset_fired = false;
  double wall_time_ms = 0.0;
};

struct EpisodeSummary {
  std::string episode_id;
  std::string strategy;
  double mean_miou = 0.0;
  std::vector<double> subsequence_miou;
  bool failed = false;
  std::string failure;
};

struct EpisodeRun {
  EpisodeSummary summary;
  std::vector<FrameRecord> records;
  /// Per-frame class overlaps, filled when requested.
  std::vector<ClassOverlap> overlaps;
};

/// Rendered frames of one episode, shared by every strategy run on it.
struct EpisodeFrames {
  EpisodeSpec spec;
  std::vector<LabeledFrame> frames;
  /// Sub-sequence index of every frame.
  std::vector<int> subsequence;
};

EpisodeFrames render_episode(const EpisodeSpec& spec, std::size_t height, std::size_t width);

/// The pre-trained model's prediction on every frame.
template <typename T>
std::vector<Mask> predict_episode(const EpisodeFrames& episode, const SegNet<T>& theta0);

template <typename T>
struct EpisodeOptions {
  /// Predictions of the same pre-trained model passed to run_episode.
  const std::vector<Mask>* theta0_predictions = nullptr;
  /// Strategy column of the records; the strategy name when empty.
  std::string label;
  bool keep_overlaps = false;
  /// Called after each frame with the frame index and the state it left.
  std::function<void(int, const AdaptState<T>&)> observer;
};

/// Streams the episode through one strategy. A strategy error scores the
/// failing frame 0, ends the episode and sets the failure flag.
template <typename T>
EpisodeRun run_episode(const EpisodeFrames& episode, const StrategyConfig& cfg,
                       std::shared_ptr<const SegNet<T>> theta0,
                       std::shared_ptr<const SourceMemory> memory, std::uint64_t seed,
                       const EpisodeOptions<T>& options = {});

/// Mean of records' mIoU per sub-sequence, in sub-sequence order.
std::vector<double> subsequence_means(const std::vector<FrameRecord>& records,
                                      const std::vector<int>& subsequence, int count);
EpisodeSummary summarize(const std::vector<FrameRecord>& records, const std::string& episode_id,
                         const std::string& strategy, const std::vector<int>& subsequence,
                         int subsequence_count);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for fewer than two values
};
MeanStd mean_std(const std::vector<double>& values);

/// (strategy - baseline) / baseline per episode.
std::vector<double> relative_improvements(const std::vector<double>& strategy,
                                          const std::vector<double>& baseline);

/// Executes `count` independent tasks on up to `jobs` threads. Tasks write to
/// their own result slots, so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

// ---- validation -----------------------------------------------------------

struct GridEntry {
  std::string checkpoint;
  StrategyConfig config;
  std::vector<double> episode_miou;
  MeanStd miou;
  bool failed = false;
};

struct ValidationReport {
  std::string engine_version;
  std::uint64_t config_hash = 0;
  /// Hash of the strategy section the grid was built from.
  std::uint64_t strategy_hash = 0;
  std::uint64_t seed = 0;
  /// Pre-trained models compared without adaptation.
  std::vector<GridEntry> pretraining;
  std::string selected_checkpoint;
  std::vector<GridEntry> grid;
  /// Index into `grid` of the winner of each strategy, in strategy order.
  std::vector<std::size_t> winners;
  /// winners_hash of the winners' configurations when the report was made.
  std::uint64_t winners_digest = 0;

  const GridEntry& winner(StrategyKind kind) const;
};

/// Highest mean; ties go to the lower learning rate, then fewer iterations,
/// then the earlier entry. Failed entries never win; returns kNoWinner when
/// every candidate failed.
inline constexpr std::size_t kNoWinner = static_cast<std::size_t>(-1);
std::size_t select_winner(const std::vector<GridEntry>& entries,
                          const std::vector<std::size_t>& candidates);

/// Learning rate (or BN momentum) one decade below, at and above `base`,
/// crossed with `adapt_iters` for gradient strategies.
std::vector<StrategyConfig> default_grid(const StrategyConfig& base,
                                         const std::vector<int>& adapt_iters);

template <typename T>
struct NamedModel {
  std::string name;
  std::shared_ptr<const SegNet<T>> model;
  /// Source memory with features from this model.
  std::shared_ptr<const SourceMemory> memory;
};

/// One strategy configuration on one episode with one pre-trained model.
struct RunTask {
  std::size_t model = 0;
  StrategyConfig config;
  std::size_t episode = 0;
};

/// Runs independent tasks, `jobs` at a time; results are in task order.
/// `predictions[m][e]` caches model m's predictions on episode e when present.
template <typename T>
std::vector<EpisodeRun> run_tasks(const std::vector<RunTask>& tasks,
                                  const std::vector<NamedModel<T>>& models,
                                  const std::vector<EpisodeFrames>& episodes,
                                  const std::vector<std::vector<std::vector<Mask>>>& predictions,
                                  std::uint64_t seed, int jobs);

/// Per-task adaptation seed; depends on the task, not on scheduling.
std::uint64_t task_seed(std::uint64_t seed, const EpisodeSpec& episode);

template <typename T>
struct ValidationPlan {
  std::vector<NamedModel<T>> checkpoints;
  std::vector<StrategyConfig> grid;
  /// Run the grid on every checkpoint instead of the NA-selected one only.
  bool grid_on_all_checkpoints = false;
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Compares the checkpoints without adaptation, selects the best one and runs
/// the grid. `on_run` receives every finished episode run in task order.
template <typename T>
ValidationReport validate(
    const ValidationPlan<T>& plan, const std::vector<EpisodeFrames>& episodes,
    const std::function<void(const std::string& checkpoint, const StrategyConfig&,
                             const EpisodeRun&)>& on_run = {});

// ---- deploy ---------------------------------------------------------------

struct StrategyResult {
  StrategyConfig config;
  std::string label;
  std::vector<EpisodeSummary> episodes;
  MeanStd improvement;
  MeanStd miou;
};

struct FinalReport {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string engine_version;
  std::string selected_checkpoint;
  /// NA of every pre-trained model on the deploy episodes.
  std::vector<StrategyResult> pretraining;
  std::vector<StrategyResult> strategies;
  /// Extra runs with more iterations per frame.
  std::vector<StrategyResult> iteration_sweep;
};

/// A set of deploy runs sharing one configuration.
struct RunGroup {
  std::string label;
  /// "pretraining", "strategy" or "sweep".
  std::string role;
  std::string checkpoint;
  StrategyConfig config;
};

/// Builds the final report from per-frame records alone; `records[g]` holds
/// group g's records over all episodes. The "strategy" group whose config is
/// NA is the improvement baseline.
FinalReport assemble_final_report(const std::vector<RunGroup>& groups,
                                  const std::vector<std::vector<FrameRecord>>& records,
                                  const std::vector<EpisodeSpec>& episodes);

/// Hash of every winner's configuration; deploy recomputes it to detect edits.
std::uint64_t winners_hash(const std::vector<StrategyConfig>& winners);

std::vector<StrategyConfig> winner_configs(const ValidationReport& report);

/// Raises TamperError if the winners no longer match the digest recorded when
/// the report was made.
void check_winners(const ValidationReport& report);

// ---- serialization --------------------------------------------------------

/// Human-readable hyperparameters, e.g. "eta=0.0001 iters=1".
std::string describe_config(const StrategyConfig& cfg);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

std::string validation_report_json(const ValidationReport& report);
ValidationReport parse_validation_report(const std::string& text);
std::string validation_table(const ValidationReport& report);

std::string final_report_json(const FinalReport& report);
FinalReport parse_final_report(const std::string& text);
/// Strategy x improvement +- std table.
std::string final_report_table(const FinalReport& report);

inline constexpr const char* kRecordCsvHeader =
    "episode_id,frame_index,environment,condition,strategy,miou,n_classes_pred,n_classes_gt,"
    "reset_fired,wall_time_ms";

/// `provenance` becomes a leading '#' comment line.
void write_records_csv(const std::filesystem::path& path, const std::string& provenance,
                       const std::vector<FrameRecord>& records);
std::vector<FrameRecord> read_records_csv(const std::filesystem::path& path);

/// mIoU-vs-frame line chart, one polyline per series.
struct Series {
  std::string label;
  std::vector<double> values;
};
/// frame_index column followed by one column per series.
std::string series_csv(const std::vector<Series>& series);
std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                           const std::vector<int>& boundaries);

}  // namespace oasis
