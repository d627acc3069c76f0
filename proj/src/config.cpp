#include "samsgl/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace samsgl::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Insertion order is the canonical serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
  using S = std::string;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"history", {[](RunConfig& c, const S& k, const S& v) { c.model.history = to_size(k, v); },
                   [](const RunConfig& c) { return std::to_string(c.model.history); }}},
      {"horizon", {[](RunConfig& c, const S& k, const S& v) { c.model.horizon = to_size(k, v); },
                   [](const RunConfig& c) { return std::to_string(c.model.horizon); }}},
      {"hidden", {[](RunConfig& c, const S& k, const S& v) { c.model.hidden = to_size(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.model.hidden); }}},
      {"blocks", {[](RunConfig& c, const S& k, const S& v) { c.model.blocks = to_size(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.model.blocks); }}},
      {"kernel", {[](RunConfig& c, const S& k, const S& v) { c.model.kernel = to_size(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.model.kernel); }}},
      {"fc_width", {[](RunConfig& c, const S& k, const S& v) { c.model.fc_width = to_size(k, v); },
                    [](const RunConfig& c) { return std::to_string(c.model.fc_width); }}},
      {"embed_dim", {[](RunConfig& c, const S& k, const S& v) { c.model.embed_dim = to_size(k, v); },
                     [](const RunConfig& c) { return std::to_string(c.model.embed_dim); }}},
      {"local_hidden", {[](RunConfig& c, const S& k, const S& v) { c.model.local_hidden = to_size(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.model.local_hidden); }}},
      {"reference", {[](RunConfig& c, const S&, const S& v) { c.model.reference = alignment::ReferenceStrategy::parse(v); },
                     [](const RunConfig& c) { return c.model.reference.to_string(); }}},
      {"temperature", {[](RunConfig& c, const S& k, const S& v) { c.model.temperature = to_double(k, v); },
                       [](const RunConfig& c) { return fmt(c.model.temperature); }}},
      {"alpha", {[](RunConfig& c, const S& k, const S& v) {
                   if (v == "auto") c.model.alpha.reset();
                   else c.model.alpha = to_double(k, v);
                 },
                 [](const RunConfig& c) { return c.model.alpha ? fmt(*c.model.alpha) : S("auto"); }}},
      {"metric", {[](RunConfig& c, const S&, const S& v) { c.model.metric = graphs::parse_metric(v); },
                  [](const RunConfig& c) { return graphs::to_string(c.model.metric); }}},
      {"radius", {[](RunConfig& c, const S& k, const S& v) { c.model.radius = to_double(k, v); },
                  [](const RunConfig& c) { return fmt(c.model.radius); }}},
      {"local_top_k", {[](RunConfig& c, const S& k, const S& v) { c.model.local_top_k = to_size(k, v); },
                       [](const RunConfig& c) { return std::to_string(c.model.local_top_k); }}},
      {"normalize_scores", {[](RunConfig& c, const S& k, const S& v) { c.model.normalize_scores = to_bool(k, v); },
                            [](const RunConfig& c) { return fmt(c.model.normalize_scores); }}},
      {"residual", {[](RunConfig& c, const S&, const S& v) { c.model.residual = blocks::parse_residual_mode(v); },
                    [](const RunConfig& c) { return blocks::to_string(c.model.residual); }}},
      {"series_alignment", {[](RunConfig& c, const S& k, const S& v) { c.model.series_alignment = to_bool(k, v); },
                            [](const RunConfig& c) { return fmt(c.model.series_alignment); }}},
      {"global_graphs", {[](RunConfig& c, const S& k, const S& v) { c.model.global_graphs = to_bool(k, v); },
                         [](const RunConfig& c) { return fmt(c.model.global_graphs); }}},
      {"local_graph", {[](RunConfig& c, const S& k, const S& v) { c.model.local_graph = to_bool(k, v); },
                       [](const RunConfig& c) { return fmt(c.model.local_graph); }}},
      {"seed", {[](RunConfig& c, const S& k, const S& v) { c.model.seed = to_u64(k, v); },
                [](const RunConfig& c) { return std::to_string(c.model.seed); }}},
      {"epochs", {[](RunConfig& c, const S& k, const S& v) { c.train.epochs = to_size(k, v); },
                  [](const RunConfig& c) { return std::to_string(c.train.epochs); }}},
      {"batch_size", {[](RunConfig& c, const S& k, const S& v) { c.train.batch_size = to_size(k, v); },
                      [](const RunConfig& c) { return std::to_string(c.train.batch_size); }}},
      {"learning_rate", {[](RunConfig& c, const S& k, const S& v) { c.train.schedule.initial = to_double(k, v); },
                         [](const RunConfig& c) { return fmt(c.train.schedule.initial); }}},
      {"lr_decay", {[](RunConfig& c, const S& k, const S& v) { c.train.schedule.decay = to_double(k, v); },
                    [](const RunConfig& c) { return fmt(c.train.schedule.decay); }}},
      {"milestones", {[](RunConfig& c, const S& k, const S& v) { c.train.schedule.milestones = to_list(k, v); },
                      [](const RunConfig& c) {
                        S out;
                        for (auto m : c.train.schedule.milestones) out += (out.empty() ? "" : ",") + std::to_string(m);
                        return out.empty() ? S("none") : out;
                      }}},
      {"lr_floor", {[](RunConfig& c, const S& k, const S& v) { c.train.schedule.floor = to_double(k, v); },
                    [](const RunConfig& c) { return fmt(c.train.schedule.floor); }}},
      {"grad_clip", {[](RunConfig& c, const S& k, const S& v) { c.train.grad_clip = to_double(k, v); },
                     [](const RunConfig& c) { return fmt(c.train.grad_clip); }}},
      {"adam_beta1", {[](RunConfig& c, const S& k, const S& v) { c.train.adam_beta1 = to_double(k, v); },
                      [](const RunConfig& c) { return fmt(c.train.adam_beta1); }}},
      {"adam_beta2", {[](RunConfig& c, const S& k, const S& v) { c.train.adam_beta2 = to_double(k, v); },
                      [](const RunConfig& c) { return fmt(c.train.adam_beta2); }}},
      {"adam_eps", {[](RunConfig& c, const S& k, const S& v) { c.train.adam_eps = to_double(k, v); },
                    [](const RunConfig& c) { return fmt(c.train.adam_eps); }}},
      {"epoch_windows", {[](RunConfig& c, const S& k, const S& v) { c.train.epoch_windows = to_size(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.train.epoch_windows); }}},
      {"precision", {[](RunConfig& c, const S&, const S& v) { c.train.precision = train::parse_precision(v); },
                     [](const RunConfig& c) { return train::to_string(c.train.precision); }}},
      {"split", {[](RunConfig& c, const S&, const S& v) { c.split = data::SplitRatios::parse(v); },
                 [](const RunConfig& c) { return c.split.to_string(); }}},
  };
  return table;
}

}  // namespace

void set_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw UsageError("unknown config key '" + key + "'");
}

RunConfig parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    set_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

std::string hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize(config)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace samsgl::config
