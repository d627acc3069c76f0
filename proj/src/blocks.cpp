#include "samsgl/blocks.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include "binary_io.hpp"

namespace samsgl::blocks {

namespace {

constexpr char kCheckpointMagic[4] = {'S', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Box-Muller on uniform_open so initial weights do not depend on the
// standard library's distribution implementation.
template <typename T>
std::vector<T> normal_values(std::size_t count, double stddev, std::mt19937_64& rng) {
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; i += 2) {
    const double u1 = uniform_open(rng);
    const double u2 = uniform_open(rng);
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i] = static_cast<T>(stddev * r * std::cos(2.0 * std::numbers::pi * u2));
    if (i + 1 < count) out[i + 1] = static_cast<T>(stddev * r * std::sin(2.0 * std::numbers::pi * u2));
  }
  return out;
}

template <typename T>
Tensor<T> add_normal(ParamStore<T>& store, const std::string& name, Shape shape, double stddev, std::mt19937_64& rng) {
  const auto n = shape_numel(shape);
  return store.add(name, std::move(shape), normal_values<T>(n, stddev, rng));
}

template <typename T>
Tensor<T> add_zeros(ParamStore<T>& store, const std::string& name, Shape shape) {
  const auto n = shape_numel(shape);
  return store.add(name, std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& where) {
  if (!engine::all_finite(t)) throw NumericError("non-finite values in " + where);
}

}  // namespace

ResidualMode parse_residual_mode(const std::string& text) {
  if (text == "passthrough") return ResidualMode::passthrough;
  if (text == "subtract") return ResidualMode::subtract;
  throw ConfigError("residual_mode must be 'passthrough' or 'subtract', got '" + text + "'");
}

std::string to_string(ResidualMode mode) { return mode == ResidualMode::passthrough ? "passthrough" : "subtract"; }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(nodes, "nodes");
  positive(history, "history");
  positive(horizon, "horizon");
  positive(input_channels, "input_channels");
  positive(output_channels, "output_channels");
  positive(hidden, "hidden");
  positive(blocks, "blocks");
  positive(fc_width, "fc_width");
  positive(embed_dim, "embed_dim");
  positive(local_hidden, "local_hidden");
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("kernel must be a positive odd number");
  if (series_alignment && history < 2) throw ConfigError("series alignment needs history >= 2");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (alpha && !(*alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(radius > 0.0)) throw ConfigError("radius must be positive");
  if (!global_graphs && !local_graph) throw ConfigError("at least one of the global or local graphs must be enabled");
  if (reference.kind == alignment::ReferenceStrategy::Kind::node && reference.node_index >= nodes) {
    throw ConfigError("reference node " + std::to_string(reference.node_index) + " out of range");
  }
}

// ------------------------------------------------------------------ ParamStore

template <typename T>
Tensor<T> ParamStore<T>::add(std::string name, Shape shape, std::vector<T> values) {
  if (contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  auto t = Tensor<T>::parameter(std::move(shape), std::move(values));
  entries_.emplace_back(std::move(name), t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw UsageError("no parameter named '" + name + "'");
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return true;
  return false;
}

template <typename T>
std::size_t ParamStore<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

// ------------------------------------------------------------------ block ops

template <typename T>
Tensor<T> embed_input(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  return engine::fully_connected(x, weight, bias);
}

template <typename T>
Tensor<T> multi_graph_conv(const Tensor<T>& x, const graphs::GraphSet<T>& graph_set, const BlockParams<T>& params,
                           const BlockOptions& options, alignment::DelayVector* delays_out) {
  std::vector<Tensor<T>> parts;
  if (graph_set.non_delayed.defined()) {
    if (options.series_alignment) {
      auto res = alignment::series_aligned_graph_conv(x, graph_set.non_delayed, params.aligned, options.aligned);
      if (delays_out) *delays_out = std::move(res.delays);
      parts.push_back(res.output);
    } else {
      parts.push_back(engine::fully_connected(engine::graph_aggregate(graph_set.non_delayed, x), params.w_plain));
    }
  }
  if (graph_set.delayed.defined()) {
    parts.push_back(engine::fully_connected(engine::graph_aggregate(graph_set.delayed, x), params.w_d));
  }
  if (graph_set.local.defined()) {
    parts.push_back(engine::fully_connected(engine::graph_aggregate(graph_set.local, x), params.w_l));
  }
  if (parts.empty()) throw ConfigError("multi_graph_conv: graph set is empty");
  auto fused_in = parts.size() == 1 ? parts[0] : engine::concat_last(parts);
  return engine::fully_connected(fused_in, params.fuse_w, params.fuse_b);
}

template <typename T>
BlockOutput<T> graph_fc_block(const Tensor<T>& x, const graphs::GraphSet<T>& graph_set, const BlockParams<T>& params,
                              const BlockOptions& options, std::size_t horizon) {
  if (x.rank() != 4) throw DimensionError("graph_fc_block expects [B,N,L,D], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), nodes = x.dim(1), len = x.dim(2), width = x.dim(3);
  BlockOutput<T> out;
  auto h0 = multi_graph_conv(x, graph_set, params, options, &out.delays);
  auto h1 = engine::reshape(h0, {batch, nodes, len * width});
  auto h2 = engine::relu(engine::fully_connected(h1, params.mlp1_w, params.mlp1_b));
  h2 = engine::relu(engine::fully_connected(h2, params.mlp2_w, params.mlp2_b));
  out.backcast = engine::reshape(engine::fully_connected(h2, params.back_w, params.back_b), {batch, nodes, len, width});
  out.forecast =
      engine::reshape(engine::fully_connected(h2, params.fore_w, params.fore_b), {batch, nodes, horizon, width});
  return out;
}

// ------------------------------------------------------------------ Model

template <typename T>
Model<T>::Model(ModelConfig config, const graphs::Geometry* geometry) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const std::size_t n = c.nodes, d = c.hidden, lw = c.history * c.hidden, fw = c.horizon * c.hidden;
  std::mt19937_64 rng(c.seed);
  auto fan = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  if (c.local_graph) {
    if (!geometry || geometry->empty()) throw ConfigError("local graph enabled but no node geometry is available");
    if (geometry->nodes != n) {
      throw ConfigError("geometry has " + std::to_string(geometry->nodes) + " nodes, model expects " + std::to_string(n));
    }
    local_inputs_ = graphs::local_graph_inputs(*geometry, c.metric, c.alpha, c.radius, c.local_top_k);
  }

  embed_w_ = add_normal(params_, "embed.w", {c.input_channels, d}, fan(c.input_channels), rng);
  embed_b_ = add_zeros(params_, "embed.b", {d});

  if (c.global_graphs) {
    graph_params_.embedding_nd = add_normal(params_, "graph.emb_nd", {n, c.embed_dim}, 1.0, rng);
    graph_params_.embedding_d = add_normal(params_, "graph.emb_d", {n, c.embed_dim}, 1.0, rng);
    graph_params_.generator.w1 = add_normal(params_, "graph.gen.w1", {c.embed_dim, c.embed_dim}, fan(c.embed_dim), rng);
    graph_params_.generator.b1 = add_zeros(params_, "graph.gen.b1", {c.embed_dim});
    graph_params_.generator.w2 = add_normal(params_, "graph.gen.w2", {c.embed_dim, c.embed_dim}, fan(c.embed_dim), rng);
    graph_params_.generator.b2 = add_zeros(params_, "graph.gen.b2", {c.embed_dim});
  }
  if (c.local_graph) {
    const std::size_t fdim = local_inputs_->feature_dim;
    graph_params_.local.w1 = add_normal(params_, "graph.local.w1", {fdim, c.local_hidden}, fan(fdim), rng);
    graph_params_.local.b1 = add_zeros(params_, "graph.local.b1", {c.local_hidden});
    graph_params_.local.w2 = add_normal(params_, "graph.local.w2", {c.local_hidden, 1}, fan(c.local_hidden), rng);
    graph_params_.local.b2 = add_zeros(params_, "graph.local.b2", {1});
  }

  // Graph aggregation sums over up to N neighbours; weights applied after it
  // are scaled down by N so activations start at unit scale.
  const double agg = fan(d) / static_cast<double>(n);
  const std::size_t parts = (c.global_graphs ? 2 : 0) + (c.local_graph ? 1 : 0);
  for (std::size_t m = 0; m < c.blocks; ++m) {
    const std::string p = "block" + std::to_string(m) + ".";
    BlockParams<T> b;
    if (c.global_graphs) {
      if (c.series_alignment) {
        // Correlation scores sum L*D products of Q and K; shrink both so the
        // scores start near unit scale.
        const double qk = fan(d) / std::pow(static_cast<double>(c.history * d), 0.25);
        b.aligned.projection.w_q = add_normal(params_, p + "align.wq", {d, d}, qk, rng);
        b.aligned.projection.w_k = add_normal(params_, p + "align.wk", {d, d}, qk, rng);
        b.aligned.conv_kernel = add_normal(params_, p + "align.conv", {c.kernel, d, d}, fan(c.kernel * d) / n, rng);
      } else {
        b.w_plain = add_normal(params_, p + "w_plain", {d, d}, agg, rng);
      }
      b.w_d = add_normal(params_, p + "w_d", {d, d}, agg, rng);
    }
    if (c.local_graph) b.w_l = add_normal(params_, p + "w_l", {d, d}, agg, rng);
    b.fuse_w = add_normal(params_, p + "fuse.w", {parts * d, d}, fan(parts * d), rng);
    b.fuse_b = add_zeros(params_, p + "fuse.b", {d});
    b.mlp1_w = add_normal(params_, p + "mlp1.w", {lw, c.fc_width}, fan(lw), rng);
    b.mlp1_b = add_zeros(params_, p + "mlp1.b", {c.fc_width});
    b.mlp2_w = add_normal(params_, p + "mlp2.w", {c.fc_width, c.fc_width}, fan(c.fc_width), rng);
    b.mlp2_b = add_zeros(params_, p + "mlp2.b", {c.fc_width});
    b.back_w = add_normal(params_, p + "back.w", {c.fc_width, lw}, fan(c.fc_width), rng);
    b.back_b = add_zeros(params_, p + "back.b", {lw});
    b.fore_w = add_normal(params_, p + "fore.w", {c.fc_width, fw}, fan(c.fc_width), rng);
    b.fore_b = add_zeros(params_, p + "fore.b", {fw});
    blocks_.push_back(std::move(b));
  }
  head_w_ = add_normal(params_, "head.w", {d, c.output_channels}, fan(d), rng);
  head_b_ = add_zeros(params_, "head.b", {c.output_channels});
}

template <typename T>
graphs::GraphSet<T> Model<T>::build_graphs(Mode mode, std::mt19937_64* rng, const graphs::GraphNoise* frozen,
                                           graphs::GraphNoise* used) const {
  graphs::GraphBuildOptions opts;
  opts.temperature = config_.temperature;
  opts.global_graphs = config_.global_graphs;
  opts.local_graph = config_.local_graph;
  return graphs::build_graph_set(graph_params_, local_inputs(), opts, mode, rng, frozen, used);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& x, Mode mode, std::mt19937_64* rng, const ForwardControl& control,
                            ForwardTrace<T>* trace) const {
  const auto& c = config_;
  if (x.rank() != 4 || x.dim(1) != c.nodes || x.dim(2) != c.history || x.dim(3) != c.input_channels) {
    throw DimensionError("model input must be [B x " + std::to_string(c.nodes) + " x " + std::to_string(c.history) +
                         " x " + std::to_string(c.input_channels) + "], got " + shape_str(x.shape()));
  }
  if (control.frozen_delays && control.frozen_delays->size() != c.blocks) {
    throw DimensionError("frozen delays must hold one vector per block");
  }
  auto xm = embed_input(x, embed_w_, embed_b_);
  auto graph_set = build_graphs(mode, rng, control.frozen_noise, trace ? &trace->noise : nullptr);

  BlockOptions opts;
  opts.series_alignment = c.series_alignment;
  opts.aligned.reference = c.reference;
  opts.aligned.normalize_scores = c.normalize_scores;

  std::vector<Tensor<T>> forecasts;
  for (std::size_t m = 0; m < c.blocks; ++m) {
    opts.aligned.frozen_delays = control.frozen_delays ? &(*control.frozen_delays)[m] : nullptr;
    auto out = graph_fc_block(xm, graph_set, blocks_[m], opts, c.horizon);
    require_finite(out.backcast, "block " + std::to_string(m));
    require_finite(out.forecast, "block " + std::to_string(m));
    if (trace) {
      trace->delays.push_back(out.delays);
      trace->forecasts.push_back(out.forecast);
    }
    forecasts.push_back(out.forecast);
    xm = c.residual == ResidualMode::passthrough ? out.backcast : engine::sub(xm, out.backcast);
  }
  auto total = forecasts.size() == 1 ? forecasts[0] : engine::add_n(forecasts);
  return engine::fully_connected(total, head_w_, head_b_);
}

template <typename T>
Tensor<T> samsgl_forward(const Model<T>& model, const Tensor<T>& x, Mode mode, std::mt19937_64* rng) {
  return model.forward(x, mode, rng);
}

// ------------------------------------------------------------------ checkpoints

template <typename T>
void save_checkpoint(const std::string& path, const std::string& config_text, const ParamStore<T>& params) {
  io::Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config_text.size()));
  w.put_bytes(config_text.data(), config_text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.entries().size()));
  std::string manifest;
  for (const auto& [name, tensor] : params.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.rank()));
    for (auto dim : tensor.shape()) w.put<std::uint64_t>(dim);
    for (T v : tensor.values()) w.put<double>(static_cast<double>(v));
    manifest += name + "\t" + shape_str(tensor.shape()) + "\n";
  }
  io::write_file(path, w.bytes());
  io::write_file(path + ".manifest", std::vector<unsigned char>(manifest.begin(), manifest.end()));
}

Checkpoint load_checkpoint(const std::string& path) {
  io::Reader r(io::read_file(path));
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  Checkpoint ck;
  const auto config_len = r.get<std::uint32_t>("config length");
  ck.config_text.resize(config_len);
  r.get_bytes(ck.config_text.data(), config_len, "config text");
  const auto count = r.get<std::uint32_t>("entry count");
  std::unordered_set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    CheckpointEntry entry;
    const auto name_offset = r.offset();
    const auto name_len = r.get<std::uint32_t>("name length");
    entry.name.resize(name_len);
    r.get_bytes(entry.name.data(), name_len, "name");
    if (!seen.insert(entry.name).second) throw FormatError("duplicate entry '" + entry.name + "'", name_offset);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank), r.offset() - 4);
    std::uint64_t count_values = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto dim = r.get<std::uint64_t>("dimension");
      entry.shape.push_back(static_cast<std::size_t>(dim));
      count_values *= dim;
    }
    r.need(count_values * 8, "values");
    entry.values.resize(static_cast<std::size_t>(count_values));
    r.get_bytes(entry.values.data(), count_values * 8, "values");
    ck.entries.push_back(std::move(entry));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return ck;
}

template <typename T>
void apply_checkpoint(ParamStore<T>& params, const Checkpoint& checkpoint) {
  if (checkpoint.entries.size() != params.entries().size()) {
    throw CompatibilityError("checkpoint holds " + std::to_string(checkpoint.entries.size()) +
                             " arrays, model has " + std::to_string(params.entries().size()));
  }
  for (std::size_t i = 0; i < checkpoint.entries.size(); ++i) {
    const auto& entry = checkpoint.entries[i];
    auto tensor = params.entries()[i].second;
    if (entry.name != params.entries()[i].first || entry.shape != tensor.shape()) {
      throw CompatibilityError("checkpoint array '" + entry.name + "' " + shape_str(entry.shape) +
                               " does not match model array '" + params.entries()[i].first + "' " +
                               shape_str(tensor.shape()));
    }
    std::vector<T> values(entry.values.begin(), entry.values.end());
    tensor.assign(values);
  }
}

#define SAMSGL_INSTANTIATE(T)                                                                                   \
  template class ParamStore<T>;                                                                                 \
  template class Model<T>;                                                                                      \
  template Tensor<T> embed_input(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> multi_graph_conv(const Tensor<T>&, const graphs::GraphSet<T>&, const BlockParams<T>&,      \
                                      const BlockOptions&, alignment::DelayVector*);                            \
  template BlockOutput<T> graph_fc_block(const Tensor<T>&, const graphs::GraphSet<T>&, const BlockParams<T>&,   \
                                         const BlockOptions&, std::size_t);                                     \
  template Tensor<T> samsgl_forward(const Model<T>&, const Tensor<T>&, Mode, std::mt19937_64*);                 \
  template void save_checkpoint(const std::string&, const std::string&, const ParamStore<T>&);                  \
  template void apply_checkpoint(ParamStore<T>&, const Checkpoint&);

SAMSGL_INSTANTIATE(float)
SAMSGL_INSTANTIATE(double)
#undef SAMSGL_INSTANTIATE

}  // namespace samsgl::blocks
