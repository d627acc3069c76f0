#include "samsgl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>

#include "binary_io.hpp"
#include "samsgl/random.hpp"

namespace samsgl::data {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'G', 'F'};
constexpr std::uint32_t kVersion = 1;

void reject_non_finite(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.values.size(); ++i) {
    if (!std::isfinite(ds.values[i])) {
      throw DataError("dataset contains a non-finite value at flat index " + std::to_string(i) +
                      " (missing values are not supported)");
    }
  }
}

}  // namespace

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw UsageError("split must be train, val or test, got '" + text + "'");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

SplitRatios SplitRatios::parse(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::istringstream is(s);
  SplitRatios r;
  std::string extra;
  if (!(is >> r.train >> r.val >> r.test) || (is >> extra)) {
    throw ConfigError("split ratios must be three comma-separated numbers, got '" + text + "'");
  }
  if (r.train <= 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative, with a positive train part, and sum to 1");
  }
  return r;
}

std::string SplitRatios::to_string() const {
  std::string out;
  for (double v : {train, val, test}) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out += (out.empty() ? "" : ",") + std::string(buf, end);
  }
  return out;
}

Range Dataset::range(Split split) const {
  const auto train_end = static_cast<std::size_t>(std::floor(static_cast<double>(steps) * ratios.train + 1e-9));
  const auto val_end =
      static_cast<std::size_t>(std::floor(static_cast<double>(steps) * (ratios.train + ratios.val) + 1e-9));
  switch (split) {
    case Split::train: return {0, std::min(train_end, steps)};
    case Split::val: return {std::min(train_end, steps), std::min(val_end, steps)};
    case Split::test: return {std::min(val_end, steps), steps};
  }
  return {};
}

double Dataset::denormalize(double value, std::size_t channel) const {
  if (!stats) return value;
  return value * stats->std[channel] + stats->mean[channel];
}

// ------------------------------------------------------------------ STGF

std::vector<unsigned char> encode_stgf(const Dataset& ds) {
  if (ds.values.size() != ds.steps * ds.nodes * ds.channels) throw DataError("dataset value count does not match shape");
  io::Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.nodes));
  w.put<std::uint64_t>(ds.steps);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.dtype));
  std::uint8_t coord_kind = 0;
  switch (ds.geometry.kind) {
    case graphs::Geometry::Kind::none: coord_kind = 0; break;
    case graphs::Geometry::Kind::planar: coord_kind = 1; break;
    case graphs::Geometry::Kind::lonlat: coord_kind = 2; break;
    case graphs::Geometry::Kind::distance:
      throw UsageError("STGF stores coordinates only; keep distance matrices in a separate geometry file");
  }
  w.put<std::uint8_t>(coord_kind);
  if (coord_kind != 0) {
    if (ds.geometry.coords.size() != ds.nodes) throw DataError("geometry node count does not match dataset");
    for (const auto& c : ds.geometry.coords) {
      w.put<double>(c[0]);
      w.put<double>(c[1]);
    }
  }
  if (ds.dtype == DType::f32) {
    for (double v : ds.values) w.put<float>(static_cast<float>(v));
  } else {
    for (double v : ds.values) w.put<double>(v);
  }
  return w.bytes();
}

Dataset decode_stgf(std::vector<unsigned char> bytes) {
  io::Reader r(std::move(bytes));
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad STGF magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("unsupported STGF version " + std::to_string(version), 4);
  Dataset ds;
  ds.nodes = r.get<std::uint32_t>("node count");
  ds.steps = r.get<std::uint64_t>("step count");
  ds.channels = r.get<std::uint32_t>("channel count");
  const auto dtype_offset = r.offset();
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype), dtype_offset);
  ds.dtype = static_cast<DType>(dtype);
  const auto kind_offset = r.offset();
  const auto coord_kind = r.get<std::uint8_t>("coord kind");
  if (coord_kind > 2) throw FormatError("unknown coord kind " + std::to_string(coord_kind), kind_offset);
  if (coord_kind != 0) {
    std::vector<std::array<double, 2>> coords(ds.nodes);
    r.need(static_cast<std::uint64_t>(ds.nodes) * 16, "coordinates");
    for (auto& c : coords) {
      c[0] = r.get<double>("coordinate");
      c[1] = r.get<double>("coordinate");
    }
    ds.geometry = coord_kind == 1 ? graphs::Geometry::planar(std::move(coords)) : graphs::Geometry::lonlat(std::move(coords));
  }
  const std::uint64_t count = ds.steps * ds.nodes * ds.channels;
  const std::uint64_t width = ds.dtype == DType::f32 ? 4 : 8;
  if (ds.nodes != 0 && ds.channels != 0 && ds.steps > r.remaining() / (ds.nodes * ds.channels * width)) {
    throw FormatError("truncated payload: header promises " + std::to_string(count) + " values", r.offset());
  }
  r.need(count * width, "payload");
  ds.values.resize(count);
  if (ds.dtype == DType::f32) {
    std::vector<float> raw(count);
    r.get_bytes(raw.data(), count * 4, "payload");
    std::copy(raw.begin(), raw.end(), ds.values.begin());
  } else {
    r.get_bytes(ds.values.data(), count * 8, "payload");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after payload", r.offset());
  reject_non_finite(ds);
  return ds;
}

void write_stgf(const std::string& path, const Dataset& dataset) { io::write_file(path, encode_stgf(dataset)); }

Dataset load_stgf(const std::string& path) { return decode_stgf(io::read_file(path)); }

Dataset import_delimited(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  line.erase(std::remove_if(line.begin(), line.end(), ::isspace), line.end());
  if (line != "time,node,channel,value") throw DataError(path + ": header must be 'time,node,channel,value'");

  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> cells;
  std::size_t max_t = 0, max_n = 0, max_c = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    long long t, n, c;
    std::string value_text, extra;
    if (!(is >> t >> n >> c >> value_text) || (is >> extra) || t < 0 || n < 0 || c < 0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    double v;
    try {
      v = std::stod(value_text);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + value_text + "'");
    }
    auto key = std::make_tuple(std::size_t(t), std::size_t(n), std::size_t(c));
    if (!cells.emplace(key, v).second) throw DataError(path + ":" + std::to_string(line_no) + ": duplicate cell");
    max_t = std::max<std::size_t>(max_t, t);
    max_n = std::max<std::size_t>(max_n, n);
    max_c = std::max<std::size_t>(max_c, c);
  }
  if (cells.empty()) throw DataError(path + ": no data rows");
  Dataset ds;
  ds.steps = max_t + 1;
  ds.nodes = max_n + 1;
  ds.channels = max_c + 1;
  if (cells.size() != ds.steps * ds.nodes * ds.channels) throw DataError(path + ": missing (time, node, channel) cells");
  ds.values.reserve(cells.size());
  for (const auto& [key, v] : cells) ds.values.push_back(v);  // map order is row-major
  reject_non_finite(ds);
  return ds;
}

// ------------------------------------------------------------------ preprocessing

NormalizationStats compute_stats(const Dataset& ds) {
  const auto train = ds.range(Split::train);
  if (train.size() == 0) throw DataError("train split is empty");
  NormalizationStats st;
  st.mean.assign(ds.channels, 0.0);
  st.std.assign(ds.channels, 0.0);
  const double count = static_cast<double>(train.size() * ds.nodes);
  for (std::size_t t = train.begin; t < train.end; ++t)
    for (std::size_t n = 0; n < ds.nodes; ++n)
      for (std::size_t c = 0; c < ds.channels; ++c) st.mean[c] += ds.at(t, n, c);
  for (auto& m : st.mean) m /= count;
  for (std::size_t t = train.begin; t < train.end; ++t)
    for (std::size_t n = 0; n < ds.nodes; ++n)
      for (std::size_t c = 0; c < ds.channels; ++c) {
        const double dev = ds.at(t, n, c) - st.mean[c];
        st.std[c] += dev * dev;
      }
  for (std::size_t c = 0; c < ds.channels; ++c) {
    st.std[c] = std::sqrt(st.std[c] / count);
    if (!(st.std[c] > 0.0)) throw DataError("channel " + std::to_string(c) + " has zero variance on the train split");
  }
  return st;
}

Dataset normalize(const Dataset& dataset) {
  if (dataset.stats) throw UsageError("dataset is already normalized");
  Dataset out = dataset;
  auto st = compute_stats(dataset);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const std::size_t c = i % out.channels;
    out.values[i] = (out.values[i] - st.mean[c]) / st.std[c];
  }
  out.stats = std::move(st);
  return out;
}

std::vector<std::size_t> window_origins(const Dataset& ds, std::size_t history, std::size_t horizon, Split split) {
  const auto r = ds.range(split);
  if (r.size() < history + horizon) {
    throw DataError(to_string(split) + " split has " + std::to_string(r.size()) + " steps, windows need " +
                    std::to_string(history + horizon));
  }
  std::vector<std::size_t> out;
  for (std::size_t o = r.begin; o + history + horizon <= r.end; ++o) out.push_back(o);
  return out;
}

WindowSample make_window(const Dataset& ds, std::size_t origin, std::size_t history, std::size_t horizon) {
  if (origin + history + horizon > ds.steps) throw DataError("window exceeds dataset length");
  WindowSample w;
  w.origin = origin;
  w.input.resize(ds.nodes * history * ds.channels);
  w.target.resize(ds.nodes * horizon * ds.channels);
  for (std::size_t n = 0; n < ds.nodes; ++n) {
    for (std::size_t t = 0; t < history; ++t)
      for (std::size_t c = 0; c < ds.channels; ++c)
        w.input[(n * history + t) * ds.channels + c] = ds.at(origin + t, n, c);
    for (std::size_t t = 0; t < horizon; ++t)
      for (std::size_t c = 0; c < ds.channels; ++c)
        w.target[(n * horizon + t) * ds.channels + c] = ds.at(origin + history + t, n, c);
  }
  return w;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& origins, std::size_t history, std::size_t horizon) {
  Batch b;
  b.size = origins.size();
  b.input.reserve(origins.size() * ds.nodes * history * ds.channels);
  b.target.reserve(origins.size() * ds.nodes * horizon * ds.channels);
  for (auto o : origins) {
    auto w = make_window(ds, o, history, horizon);
    b.input.insert(b.input.end(), w.input.begin(), w.input.end());
    b.target.insert(b.target.end(), w.target.begin(), w.target.end());
  }
  return b;
}

// ------------------------------------------------------------------ synthetic data

namespace {

void check_synth_spec(const SynthSpec& spec) {
  if (spec.nodes == 0) throw UsageError("synthetic dataset needs at least one node");
  if (spec.steps == 0) throw UsageError("synthetic dataset needs at least one step");
  if (spec.components == 0) throw UsageError("base signal needs at least one sinusoid");
  if (!(spec.min_period > 0.0) || spec.max_period < spec.min_period) throw UsageError("invalid period range");
  if (spec.noise < 0.0) throw UsageError("noise must be nonnegative");
  if (!spec.delays.empty() && spec.delays.size() != spec.nodes) throw UsageError("explicit delays must list every node");
  if (spec.delays.empty() && spec.max_delay == 0) throw UsageError("max_delay must be positive");
}

struct BaseSignal {
  std::vector<double> period, phase;
  double operator()(double t) const {
    double v = 0.0;
    for (std::size_t j = 0; j < period.size(); ++j) v += std::sin(2.0 * std::numbers::pi * t / period[j] + phase[j]);
    return v;
  }
};

BaseSignal draw_base(const SynthSpec& spec, std::mt19937_64& rng) {
  BaseSignal b;
  for (std::size_t j = 0; j < spec.components; ++j) {
    b.period.push_back(spec.min_period + (spec.max_period - spec.min_period) * uniform_open(rng));
    b.phase.push_back(2.0 * std::numbers::pi * uniform_open(rng));
  }
  return b;
}

double sample_std(const std::vector<double>& v) {
  double mean = 0.0, sq = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size()));
}

std::vector<std::array<double, 2>> draw_positions(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::array<double, 2>> coords(n);
  for (auto& c : coords) c = {uniform_open(rng), uniform_open(rng)};
  return coords;
}

}  // namespace

SynthResult synth_delayed_diffusion(const SynthSpec& spec, std::uint64_t seed) {
  check_synth_spec(spec);
  std::mt19937_64 rng(seed);
  const auto coords = draw_positions(spec.nodes, rng);

  std::vector<std::size_t> delays = spec.delays;
  if (delays.empty()) {
    std::vector<double> dist(spec.nodes);
    double far = 0.0;
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      dist[i] = std::hypot(coords[i][0] - coords[0][0], coords[i][1] - coords[0][1]);
      far = std::max(far, dist[i]);
    }
    delays.resize(spec.nodes);
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      const double frac = far > 0.0 ? dist[i] / far : 0.0;
      delays[i] = std::min(spec.max_delay - 1, static_cast<std::size_t>(frac * static_cast<double>(spec.max_delay)));
    }
  }

  const auto base = draw_base(spec, rng);
  std::vector<double> b0(spec.steps);
  for (std::size_t t = 0; t < spec.steps; ++t) b0[t] = base(static_cast<double>(t));
  const double noise_std = spec.noise * sample_std(b0);

  SynthResult out;
  auto& ds = out.dataset;
  ds.steps = spec.steps;
  ds.nodes = spec.nodes;
  ds.channels = 1;
  ds.values.resize(spec.steps * spec.nodes);
  ds.geometry = graphs::Geometry::planar(coords);
  for (std::size_t t = 0; t < spec.steps; ++t)
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      double v = base(static_cast<double>(t) - static_cast<double>(delays[i]));
      if (noise_std > 0.0) v += noise_std * standard_normal(rng);
      ds.values[t * spec.nodes + i] = v;
    }
  out.delays = std::move(delays);
  return out;
}

SynthResult synth_shifted_copies(const SynthSpec& spec, std::uint64_t seed) {
  check_synth_spec(spec);
  std::mt19937_64 rng(seed);
  const auto coords = draw_positions(spec.nodes, rng);
  std::vector<std::size_t> delays = spec.delays;
  if (delays.empty()) {
    delays.assign(spec.nodes, 0);
    for (std::size_t i = 1; i < spec.nodes; ++i) delays[i] = uniform_index(rng, spec.max_delay);
  }
  for (auto d : delays)
    if (d >= spec.steps) throw UsageError("circular delays must be shorter than the series");

  const auto base = draw_base(spec, rng);
  std::vector<double> b0(spec.steps);
  for (std::size_t t = 0; t < spec.steps; ++t) b0[t] = base(static_cast<double>(t));
  const double noise_std = spec.noise * sample_std(b0);

  SynthResult out;
  auto& ds = out.dataset;
  ds.steps = spec.steps;
  ds.nodes = spec.nodes;
  ds.channels = 1;
  ds.values.resize(spec.steps * spec.nodes);
  ds.geometry = graphs::Geometry::planar(coords);
  const std::size_t L = spec.steps;
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t i = 0; i < spec.nodes; ++i) {
      double v = b0[(t + L - delays[i]) % L];
      if (noise_std > 0.0) v += noise_std * standard_normal(rng);
      ds.values[t * spec.nodes + i] = v;
    }
  out.delays = std::move(delays);
  return out;
}

}  // namespace samsgl::data
