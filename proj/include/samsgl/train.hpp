#pragma once

// Losses, metrics, Adam, the multi-step learning-rate schedule and the
// training / evaluation loops.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "samsgl/blocks.hpp"
#include "samsgl/data.hpp"

namespace samsgl::train {

using engine::NamedTensor;

double mae(const std::vector<double>& pred, const std::vector<double>& target);
double rmse(const std::vector<double>& pred, const std::vector<double>& target);

// ------------------------------------------------------------------ optimizer

struct OptimState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;  // one per parameter, lazily sized
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Missing gradients count as zero. Throws NumericError, leaving parameters
/// and state untouched, if any gradient is non-finite.
template <typename T>
void adam_step(const std::vector<NamedTensor<T>>& params, OptimState& state, double lr);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm);

struct Schedule {
  double initial = 0.005;
  double decay = 0.05;
  std::vector<std::size_t> milestones{50, 75};
  double floor = 1e-8;
};

/// initial * decay^(milestones with m <= epoch), never below `floor`.
double lr_at(std::size_t epoch, const Schedule& schedule);

// ------------------------------------------------------------------ evaluation

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<double> horizon_mae;  // length L', horizon h at index h-1
  std::size_t windows = 0;
};

/// Maps a normalized batch input [B, N, L, C] to normalized predictions
/// [B, N, L', C].
using Predictor = std::function<std::vector<double>(const data::Batch&)>;

/// Row of a prediction dump, in original units.
struct DumpRow {
  std::size_t origin, node, horizon, channel;
  double predicted, actual;
};

/// Metrics over every window of `split` in original units. `dataset` must be
/// normalized. `dump` receives one row per (window, node, step, channel).
Metrics evaluate_predictor(const data::Dataset& dataset, data::Split split, std::size_t history, std::size_t horizon,
                           const Predictor& predictor, std::size_t batch_size = 64,
                           std::vector<DumpRow>* dump = nullptr);

/// Repeats the last observed step across the horizon.
Predictor persistence_predictor(std::size_t nodes, std::size_t history, std::size_t horizon, std::size_t channels);

/// Eval-mode forward pass of `model`.
template <typename T>
Predictor model_predictor(const blocks::Model<T>& model);

template <typename T>
Metrics evaluate(const blocks::Model<T>& model, const data::Dataset& dataset, data::Split split,
                 std::vector<DumpRow>* dump = nullptr) {
  const auto& c = model.config();
  return evaluate_predictor(dataset, split, c.history, c.horizon, model_predictor(model), 64, dump);
}

// ------------------------------------------------------------------ training

enum class Precision { f64, f32 };

Precision parse_precision(const std::string& text);
std::string to_string(Precision precision);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  Schedule schedule;
  double grad_clip = 5.0;            // 0 disables clipping
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epoch_windows = 0;     // train windows drawn per epoch; 0 = all
  Precision precision = Precision::f64;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean batch MAE, normalized units
  double val_mae = 0.0;     // original units
  double val_rmse = 0.0;
  double seconds = 0.0;
};

struct RunReport {
  std::vector<EpochRecord> history;
  std::optional<Metrics> test;
  std::optional<std::size_t> best_epoch;
  bool checkpoint_written = false;
  bool diverged = false;
  std::string failure;
  double wall_seconds = 0.0;
  std::string config_text;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string checkpoint_path;        // empty: keep the best parameters in memory only
  std::string config_text;            // stored in the report and the checkpoint
  std::ostream* log = nullptr;        // JSON lines, one per epoch plus a summary
};

/// Shuffles train windows each epoch, minimizes batch MAE with Adam, keeps the
/// parameters with the best validation MAE and reports test metrics for them.
/// Divergence stops training; the best checkpoint so far stays on disk.
template <typename T>
RunReport train_loop(blocks::Model<T>& model, const data::Dataset& dataset, const TrainConfig& config,
                     const TrainOptions& options = {});

/// The summary record written at the end of a run.
std::string summary_json(const RunReport& report);

}  // namespace samsgl::train
