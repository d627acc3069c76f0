#pragma once

// Command implementations behind the `samsgl` executable. Each command is a
// plain function so tests can drive it without a subprocess.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "samsgl/config.hpp"
#include "samsgl/train.hpp"

namespace samsgl::cli {

enum class Ablation { none, sa, mg_g, mg_l };

Ablation parse_ablation(const std::string& text);  // "sa", "mg-g", "mg-l"
std::string ablation_label(Ablation ablation);     // "full", "w/o SA", ...

/// Flips the switches that remove one component.
void apply_ablation(config::RunConfig& config, Ablation ablation);

/// Relative paths that do not exist are looked up under $SAMSGL_DATA_DIR.
std::string resolve_data_path(const std::string& path);

// ------------------------------------------------------------------ gen

struct GenOptions {
  data::SynthSpec spec;
  std::uint64_t seed = 0;
  std::string out;
  data::DType dtype = data::DType::f64;
};

/// Writes the dataset and `<out>.delays.txt` (one delay per line, node order).
data::SynthResult cmd_gen(const GenOptions& options);

// ------------------------------------------------------------------ train

struct TrainOptions {
  std::string config_path;                                     // empty: defaults
  std::vector<std::pair<std::string, std::string>> overrides;  // applied after the file
  std::string data_path;
  std::string geometry_path;                                   // overrides dataset coordinates
  std::string out_dir = "runs";
  std::string run_name;                                        // empty: UTC timestamp
  Ablation ablation = Ablation::none;
  std::ostream* progress = nullptr;                            // human-readable epoch lines
};

struct TrainOutcome {
  std::string run_dir;
  std::string checkpoint_path;
  std::string config_hash;
  config::RunConfig config;  // effective, ablation applied
  train::RunReport report;
};

/// Run directory `<out_dir>/<run_name>-<hash>` holding config.txt,
/// report.jsonl, summary.json and checkpoint.sgck.
TrainOutcome cmd_train(const TrainOptions& options);

// ------------------------------------------------------------------ eval

struct EvalOptions {
  std::string checkpoint_path;
  std::string data_path;
  std::string geometry_path;
  data::Split split = data::Split::test;
  std::string dump_path;  // CSV origin,node,horizon,channel,predicted,actual
};

struct EvalOutcome {
  train::Metrics model;
  train::Metrics persistence;
  std::size_t dump_rows = 0;
};

EvalOutcome cmd_eval(const EvalOptions& options);

/// MAE/RMSE table with horizons 3, 6 and 12 called out.
void print_metrics_table(std::ostream& out, const EvalOutcome& outcome, data::Split split);

// ------------------------------------------------------------------ ablate

struct AblationRow {
  std::string label;
  double mae = 0.0;
  double rmse = 0.0;
  std::string config_hash;
  bool diverged = false;
};

struct AblateOutcome {
  std::vector<AblationRow> rows;  // full, w/o SA, w/o MG-G, w/o MG-L
  std::string table;
};

/// Trains the full model and each ablation from the same base config and
/// seed. Rows carry the hash of the shared base config.
AblateOutcome cmd_ablate(const TrainOptions& options);

// ------------------------------------------------------------------ entry point

/// Parses argv and dispatches. Exit codes: 0 success, 1 runtime or numeric
/// failure, 2 usage, format or I/O error.
int run(int argc, const char* const* argv);

}  // namespace samsgl::cli
