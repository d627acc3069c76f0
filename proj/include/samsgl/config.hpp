#pragma once

// Run configuration as `key = value` lines.
//
// Every key, with its default:
//
//   history = 12            input window L
//   horizon = 12            forecast window L'
//   hidden = 64             feature width D
//   blocks = 4              number of graph-FC blocks M
//   kernel = 3              odd temporal convolution width
//   fc_width = 256          temporal MLP width
//   embed_dim = 10          node embedding width
//   local_hidden = 16       local-graph MLP width
//   reference = mean        alignment reference: mean | node:<i>
//   temperature = 0.5       Gumbel temperature s
//   alpha = auto            distance kernel bandwidth, auto = mean nonzero d^2
//   metric = euclidean      euclidean | great_circle
//   radius = 1              sphere radius for great_circle
//   local_top_k = 0         keep k strongest kernel entries per row, 0 = all
//   normalize_scores = false  softmax the correlation scores over lags
//   residual = passthrough  passthrough | subtract
//   series_alignment = true
//   global_graphs = true
//   local_graph = true
//   seed = 0
//   epochs = 100
//   batch_size = 32
//   learning_rate = 0.005
//   lr_decay = 0.05
//   milestones = 50,75      epochs at which the rate is multiplied by lr_decay
//   lr_floor = 1e-08
//   grad_clip = 5           global gradient norm bound, 0 disables
//   adam_beta1 = 0.9
//   adam_beta2 = 0.999
//   adam_eps = 1e-08
//   epoch_windows = 0       train windows per epoch, 0 = all
//   precision = f64         f64 | f32
//   split = 0.7,0.1,0.2     train,val,test fractions
//
// Blank lines and text after `#` are ignored. The node and channel counts
// come from the dataset.

#include <cstdint>
#include <string>

#include "samsgl/blocks.hpp"
#include "samsgl/data.hpp"
#include "samsgl/train.hpp"

namespace samsgl::config {

struct RunConfig {
  blocks::ModelConfig model;
  train::TrainConfig train;
  data::SplitRatios split;
};

/// Applies one assignment. Unknown keys throw UsageError naming the key;
/// malformed values throw ConfigError.
void set_value(RunConfig& config, const std::string& key, const std::string& value);

/// Starts from the defaults and applies every line of `text`.
RunConfig parse(const std::string& text);
RunConfig load(const std::string& path);

/// Canonical text listing every key in a fixed order.
std::string serialize(const RunConfig& config);

/// 64-bit FNV-1a of the canonical text, as 16 hex digits.
std::string hash(const RunConfig& config);

}  // namespace samsgl::config
