#include "samsgl/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace samsgl::graphs {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::string normalized = line;
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::replace(normalized.begin(), normalized.end(), '\t', ' ');
  std::istringstream is(normalized);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

double parse_number(const std::string& text, const std::string& path, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw DataError(path + ":" + std::to_string(line_no) + ": not a finite number: '" + text + "'");
}

double wrap_degrees(double delta) {
  while (delta > 180.0) delta -= 360.0;
  while (delta < -180.0) delta += 360.0;
  return delta;
}

void check_lonlat(const Geometry& g) {
  for (const auto& c : g.coords) {
    if (c[0] < -180.0 || c[0] > 360.0 || c[1] < -90.0 || c[1] > 90.0) {
      throw DataError("lon/lat out of range: (" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + ")");
    }
  }
}

}  // namespace

Geometry Geometry::planar(std::vector<std::array<double, 2>> xy) {
  Geometry g;
  g.kind = Kind::planar;
  g.nodes = xy.size();
  g.coords = std::move(xy);
  return g;
}

Geometry Geometry::lonlat(std::vector<std::array<double, 2>> lon_lat) {
  Geometry g;
  g.kind = Kind::lonlat;
  g.nodes = lon_lat.size();
  g.coords = std::move(lon_lat);
  check_lonlat(g);
  return g;
}

Geometry Geometry::from_distances(std::size_t nodes, std::vector<double> matrix) {
  if (matrix.size() != nodes * nodes) throw DataError("distance matrix must hold N*N entries");
  for (std::size_t i = 0; i < nodes; ++i) {
    if (matrix[i * nodes + i] != 0.0) throw DataError("distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < nodes; ++j) {
      const double d = matrix[i * nodes + j];
      if (!(d >= 0.0) || !std::isfinite(d)) throw DataError("distance matrix entries must be finite and nonnegative");
      if (std::abs(d - matrix[j * nodes + i]) > 1e-12 * std::max(1.0, d)) {
        throw DataError("distance matrix must be symmetric");
      }
    }
  }
  Geometry g;
  g.kind = Kind::distance;
  g.nodes = nodes;
  g.distances = std::move(matrix);
  return g;
}

DistanceMetric parse_metric(const std::string& text) {
  if (text == "euclidean") return DistanceMetric::euclidean;
  if (text == "great_circle") return DistanceMetric::great_circle;
  throw ConfigError("distance metric must be 'euclidean' or 'great_circle', got '" + text + "'");
}

std::string to_string(DistanceMetric metric) {
  return metric == DistanceMetric::euclidean ? "euclidean" : "great_circle";
}

Geometry load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open geometry file '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    auto fields = split_fields(line);
    if (!fields.empty() && fields[0][0] != '#') rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw DataError(path + ": empty geometry file");

  const auto& header = rows[0];
  const bool planar = header == std::vector<std::string>{"node", "x", "y"};
  const bool lonlat = header == std::vector<std::string>{"node", "lon", "lat"};
  if (planar || lonlat) {
    std::vector<std::array<double, 2>> coords(rows.size() - 1);
    std::vector<bool> seen(coords.size(), false);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 3) throw DataError(path + ":" + std::to_string(r + 1) + ": expected 3 fields");
      const double id = parse_number(rows[r][0], path, r + 1);
      if (id < 0 || id >= static_cast<double>(coords.size()) || id != std::floor(id) ||
          seen[static_cast<std::size_t>(id)]) {
        throw DataError(path + ":" + std::to_string(r + 1) + ": node ids must be 0..N-1 without repeats");
      }
      const auto n = static_cast<std::size_t>(id);
      seen[n] = true;
      coords[n] = {parse_number(rows[r][1], path, r + 1), parse_number(rows[r][2], path, r + 1)};
    }
    return planar ? Geometry::planar(std::move(coords)) : Geometry::lonlat(std::move(coords));
  }

  const std::size_t n = rows.size();
  std::vector<double> matrix;
  matrix.reserve(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    if (rows[r].size() != n) throw DataError(path + ":" + std::to_string(r + 1) + ": distance matrix row must have N entries");
    for (const auto& f : rows[r]) matrix.push_back(parse_number(f, path, r + 1));
  }
  return Geometry::from_distances(n, std::move(matrix));
}

std::vector<double> pairwise_distance(const Geometry& geometry, DistanceMetric metric, double radius) {
  const std::size_t n = geometry.nodes;
  if (geometry.kind == Geometry::Kind::distance) return geometry.distances;
  if (!geometry.has_coords()) throw DataError("pairwise_distance: geometry has no coordinates");
  std::vector<double> out(n * n, 0.0);
  if (metric == DistanceMetric::great_circle) {
    if (geometry.kind != Geometry::Kind::lonlat) throw DataError("great-circle distance requires lon/lat coordinates");
    check_lonlat(geometry);
    constexpr double deg = std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double lat1 = geometry.coords[i][1] * deg, lat2 = geometry.coords[j][1] * deg;
        const double dlat = lat2 - lat1;
        const double dlon = (geometry.coords[j][0] - geometry.coords[i][0]) * deg;
        const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                         std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) * std::sin(dlon / 2);
        const double angle = 2.0 * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
        out[i * n + j] = out[j * n + i] = angle * radius;
      }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = geometry.coords[j][0] - geometry.coords[i][0];
      const double dy = geometry.coords[j][1] - geometry.coords[i][1];
      out[i * n + j] = out[j * n + i] = std::hypot(dx, dy);
    }
  return out;
}

// ------------------------------------------------------------------ Gumbel

double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

std::vector<double> sample_gumbel(std::size_t count, std::mt19937_64& rng) {
  std::vector<double> out(count);
  for (auto& v : out) v = gumbel_from_uniform(uniform_open(rng));
  return out;
}

std::vector<double> sample_gumbel_difference(std::size_t count, std::mt19937_64& rng) {
  std::vector<double> out(count);
  for (auto& v : out) {
    const double g = gumbel_from_uniform(uniform_open(rng));
    const double g_prime = gumbel_from_uniform(uniform_open(rng));
    v = g - g_prime;
  }
  return out;
}

template <typename T>
Tensor<T> gumbel_regularize(const Tensor<T>& prob, double temperature, Mode mode, std::mt19937_64* rng,
                            const std::vector<double>* noise) {
  if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be positive");
  for (T v : prob.values())
    if (!(v > T(0) && v < T(1))) throw DomainError("gumbel_regularize: raw adjacency entry outside (0,1)");
  if (mode == Mode::eval) return prob;
  std::vector<double> drawn;
  if (!noise) {
    if (!rng) throw UsageError("gumbel_regularize: train mode needs an RNG or explicit noise");
    drawn = sample_gumbel_difference(prob.size(), *rng);
    noise = &drawn;
  }
  return gumbel_regularize_logits(engine::logit(prob), temperature, noise);
}

template <typename T>
Tensor<T> gumbel_regularize_logits(const Tensor<T>& logits, double temperature, const std::vector<double>* noise) {
  if (!(temperature > 0.0)) throw ConfigError("Gumbel temperature must be positive");
  if (!noise) return engine::sigmoid_open(logits);
  if (noise->size() != logits.size()) throw DimensionError("gumbel noise size does not match adjacency");
  std::vector<T> shift(noise->size());
  for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = static_cast<T>((*noise)[i] / temperature);
  return engine::sigmoid_open(engine::add(logits, Tensor<T>::constant(logits.shape(), std::move(shift))));
}

// ------------------------------------------------------------------ global graphs

template <typename T>
Tensor<T> generalized_embedding(const Tensor<T>& embedding, const SharedGenerator<T>& gen) {
  auto hidden = engine::tanh(engine::fully_connected(embedding, gen.w1, gen.b1));
  return engine::fully_connected(hidden, gen.w2, gen.b2);
}

template <typename T>
Tensor<T> global_graph_logits(const Tensor<T>& embedding, const SharedGenerator<T>& gen) {
  auto e = generalized_embedding(embedding, gen);
  return engine::matmul(e, engine::transpose(e));
}

template <typename T>
Tensor<T> global_graph_raw(const Tensor<T>& embedding, const SharedGenerator<T>& gen) {
  return engine::sigmoid_open(global_graph_logits(embedding, gen));
}

// ------------------------------------------------------------------ local graph

LocalGraphInputs local_graph_inputs(const Geometry& geometry, DistanceMetric metric, std::optional<double> alpha,
                                    double radius, std::size_t top_k) {
  if (alpha && !(*alpha > 0.0)) throw ConfigError("local graph scale alpha must be positive");
  LocalGraphInputs out;
  const std::size_t n = geometry.nodes;
  out.nodes = n;
  out.distances = pairwise_distance(geometry, metric, radius);

  if (alpha) {
    out.alpha = *alpha;
  } else {
    double total = 0.0;
    std::size_t count = 0;
    for (double d : out.distances)
      if (d > 0.0) {
        total += d * d;
        ++count;
      }
    out.alpha = count ? total / static_cast<double>(count) : 1.0;
  }

  out.kernel.resize(n * n);
  for (std::size_t i = 0; i < n * n; ++i) out.kernel[i] = std::exp(-out.distances[i] * out.distances[i] / out.alpha);
  if (top_k > 0 && top_k < n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> order(n);
      for (std::size_t j = 0; j < n; ++j) order[j] = j;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return out.kernel[i * n + a] > out.kernel[i * n + b]; });
      for (std::size_t r = top_k; r < n; ++r) out.kernel[i * n + order[r]] = 0.0;
    }
  }

  if (geometry.has_coords()) {
    out.feature_dim = 2;
    out.features.resize(n * n * 2);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dx = geometry.coords[j][0] - geometry.coords[i][0];
        const double dy = geometry.coords[j][1] - geometry.coords[i][1];
        if (geometry.kind == Geometry::Kind::lonlat) dx = wrap_degrees(dx);
        out.features[(i * n + j) * 2] = dx;
        out.features[(i * n + j) * 2 + 1] = dy;
      }
  } else {
    out.feature_dim = 1;
    out.features = out.distances;
  }
  // Unit RMS per feature column over off-diagonal pairs.
  for (std::size_t f = 0; f < out.feature_dim; ++f) {
    double ss = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < n * n; ++p) {
      if (p / n == p % n) continue;
      ss += out.features[p * out.feature_dim + f] * out.features[p * out.feature_dim + f];
      ++count;
    }
    const double rms = count ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
    if (rms > 0.0)
      for (std::size_t p = 0; p < n * n; ++p) out.features[p * out.feature_dim + f] /= rms;
  }
  return out;
}

template <typename T>
Tensor<T> local_graph(const LocalGraphInputs& inputs, const LocalMlp<T>& mlp) {
  const std::size_t n = inputs.nodes;
  std::vector<T> feats(inputs.features.begin(), inputs.features.end());
  auto r = Tensor<T>::constant({n * n, inputs.feature_dim}, std::move(feats));
  auto hidden = engine::relu(engine::fully_connected(r, mlp.w1, mlp.b1));
  auto weight = engine::softplus(engine::fully_connected(hidden, mlp.w2, mlp.b2));
  std::vector<T> kern(inputs.kernel.begin(), inputs.kernel.end());
  auto kernel = Tensor<T>::constant({n * n, 1}, std::move(kern));
  return engine::reshape(engine::mul(kernel, weight), {n, n});
}

// ------------------------------------------------------------------ graph set

template <typename T>
GraphSet<T> build_graph_set(const GraphParams<T>& params, const LocalGraphInputs* local_inputs,
                            const GraphBuildOptions& options, Mode mode, std::mt19937_64* rng,
                            const GraphNoise* frozen_noise, GraphNoise* used_noise) {
  GraphSet<T> set;
  GraphNoise noise;
  if (options.global_graphs) {
    auto logits_nd = global_graph_logits(params.embedding_nd, params.generator);
    auto logits_d = global_graph_logits(params.embedding_d, params.generator);
    if (mode == Mode::train) {
      if (frozen_noise) {
        noise = *frozen_noise;
      } else {
        if (!rng) throw UsageError("build_graph_set: train mode needs an RNG or frozen noise");
        noise.non_delayed = sample_gumbel_difference(logits_nd.size(), *rng);
        noise.delayed = sample_gumbel_difference(logits_d.size(), *rng);
      }
      set.non_delayed = gumbel_regularize_logits(logits_nd, options.temperature, &noise.non_delayed);
      set.delayed = gumbel_regularize_logits(logits_d, options.temperature, &noise.delayed);
    } else {
      set.non_delayed = engine::sigmoid_open(logits_nd);
      set.delayed = engine::sigmoid_open(logits_d);
    }
  }
  if (options.local_graph) {
    if (!local_inputs) throw ConfigError("local graph enabled but no node geometry is available");
    set.local = local_graph(*local_inputs, params.local);
  }
  if (used_noise) *used_noise = std::move(noise);
  return set;
}

#define SAMSGL_INSTANTIATE(T)                                                                                \
  template Tensor<T> gumbel_regularize(const Tensor<T>&, double, Mode, std::mt19937_64*,                     \
                                       const std::vector<double>*);                                         \
  template Tensor<T> gumbel_regularize_logits(const Tensor<T>&, double, const std::vector<double>*);          \
  template Tensor<T> generalized_embedding(const Tensor<T>&, const SharedGenerator<T>&);                     \
  template Tensor<T> global_graph_logits(const Tensor<T>&, const SharedGenerator<T>&);                       \
  template Tensor<T> global_graph_raw(const Tensor<T>&, const SharedGenerator<T>&);                          \
  template Tensor<T> local_graph(const LocalGraphInputs&, const LocalMlp<T>&);                               \
  template GraphSet<T> build_graph_set(const GraphParams<T>&, const LocalGraphInputs*,                       \
                                       const GraphBuildOptions&, Mode, std::mt19937_64*, const GraphNoise*, \
                                       GraphNoise*);

SAMSGL_INSTANTIATE(float)
SAMSGL_INSTANTIATE(double)
#undef SAMSGL_INSTANTIATE

}  // namespace samsgl::graphs
