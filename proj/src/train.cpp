#include "samsgl/train.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <ostream>
#include <random>

#include <json.hpp>

#include "samsgl/random.hpp"

namespace samsgl::train {

using engine::Tensor;

namespace {

void check_same_size(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("metric inputs differ in size: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw DimensionError("metric inputs are empty");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename T>
std::vector<std::vector<T>> snapshot(const std::vector<NamedTensor<T>>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

template <typename T>
void restore(const std::vector<NamedTensor<T>>& params, const std::vector<std::vector<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].second;
    p.assign(values[i]);
  }
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"mae", m.mae}, {"rmse", m.rmse}, {"horizon_mae", m.horizon_mae}, {"windows", m.windows}};
}

}  // namespace

double mae(const std::vector<double>& pred, const std::vector<double>& target) {
  check_same_size(pred, target);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  check_same_size(pred, target);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

// ------------------------------------------------------------------ optimizer

template <typename T>
void adam_step(const std::vector<NamedTensor<T>>& params, OptimState& st, double lr) {
  for (const auto& [name, p] : params)
    for (T g : p.grad())
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient for " + name);

  st.m.resize(params.size());
  st.v.resize(params.size());
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].second;
    const auto n = p.size();
    auto& m = st.m[k];
    auto& v = st.v[k];
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    auto grad = p.grad();
    std::vector<T> next(p.values().begin(), p.values().end());
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
      const double step = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps);
      next[i] = static_cast<T>(static_cast<double>(next[i]) - step);
    }
    p.assign(next);
  }
}

template <typename T>
double clip_grad_norm(const std::vector<NamedTensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params)
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& [name, p] : params)
      for (T& g : p.node()->grad) g *= factor;
  }
  return norm;
}

double lr_at(std::size_t epoch, const Schedule& schedule) {
  double lr = schedule.initial;
  for (auto m : schedule.milestones)
    if (epoch >= m) lr *= schedule.decay;
  return std::max(lr, schedule.floor);
}

// ------------------------------------------------------------------ evaluation

Metrics evaluate_predictor(const data::Dataset& ds, data::Split split, std::size_t history, std::size_t horizon,
                           const Predictor& predictor, std::size_t batch_size, std::vector<DumpRow>* dump) {
  if (!ds.stats) throw UsageError("evaluation expects a normalized dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto origins = data::window_origins(ds, history, horizon, split);
  const std::size_t N = ds.nodes, C = ds.channels;
  std::vector<double> abs_sum(horizon, 0.0);
  double sq_sum = 0.0;
  for (std::size_t start = 0; start < origins.size(); start += batch_size) {
    const std::size_t end = std::min(origins.size(), start + batch_size);
    std::vector<std::size_t> chunk(origins.begin() + start, origins.begin() + end);
    const auto batch = data::make_batch(ds, chunk, history, horizon);
    const auto pred = predictor(batch);
    if (pred.size() != batch.target.size()) {
      throw DimensionError("predictor returned " + std::to_string(pred.size()) + " values, expected " +
                           std::to_string(batch.target.size()));
    }
    for (std::size_t b = 0; b < chunk.size(); ++b)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < horizon; ++h)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = ((b * N + n) * horizon + h) * C + c;
            const double p = ds.denormalize(pred[i], c);
            const double y = ds.denormalize(batch.target[i], c);
            if (!std::isfinite(p)) throw NumericError("non-finite prediction");
            abs_sum[h] += std::abs(p - y);
            sq_sum += (p - y) * (p - y);
            if (dump) dump->push_back({chunk[b], n, h + 1, c, p, y});
          }
  }
  Metrics m;
  m.windows = origins.size();
  const double per_h = static_cast<double>(origins.size() * N * C);
  double total = 0.0;
  for (std::size_t h = 0; h < horizon; ++h) {
    total += abs_sum[h];
    m.horizon_mae.push_back(abs_sum[h] / per_h);
  }
  m.mae = total / (per_h * static_cast<double>(horizon));
  m.rmse = std::sqrt(sq_sum / (per_h * static_cast<double>(horizon)));
  return m;
}

Predictor persistence_predictor(std::size_t nodes, std::size_t history, std::size_t horizon, std::size_t channels) {
  return [=](const data::Batch& batch) {
    std::vector<double> out(batch.size * nodes * horizon * channels);
    for (std::size_t b = 0; b < batch.size; ++b)
      for (std::size_t n = 0; n < nodes; ++n)
        for (std::size_t h = 0; h < horizon; ++h)
          for (std::size_t c = 0; c < channels; ++c)
            out[((b * nodes + n) * horizon + h) * channels + c] =
                batch.input[((b * nodes + n) * history + history - 1) * channels + c];
    return out;
  };
}

template <typename T>
Predictor model_predictor(const blocks::Model<T>& model) {
  return [&model](const data::Batch& batch) {
    const auto& c = model.config();
    auto x = Tensor<T>::constant({batch.size, c.nodes, c.history, c.input_channels},
                                 std::vector<T>(batch.input.begin(), batch.input.end()));
    auto y = model.forward(x, graphs::Mode::eval, nullptr);
    return std::vector<double>(y.values().begin(), y.values().end());
  };
}

// ------------------------------------------------------------------ training

Precision parse_precision(const std::string& text) {
  if (text == "f64") return Precision::f64;
  if (text == "f32") return Precision::f32;
  throw ConfigError("precision must be f64 or f32, got '" + text + "'");
}

std::string to_string(Precision precision) { return precision == Precision::f64 ? "f64" : "f32"; }

template <typename T>
RunReport train_loop(blocks::Model<T>& model, const data::Dataset& ds, const TrainConfig& config,
                     const TrainOptions& options) {
  if (!ds.stats) throw UsageError("training expects a normalized dataset");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto& mc = model.config();
  if (ds.nodes != mc.nodes || ds.channels != mc.input_channels || ds.channels != mc.output_channels) {
    throw CompatibilityError("dataset shape (N=" + std::to_string(ds.nodes) + ", C=" + std::to_string(ds.channels) +
                             ") does not match the model configuration");
  }
  const auto wall_start = std::chrono::steady_clock::now();
  RunReport report;
  report.config_text = options.config_text;
  report.seed = mc.seed;

  const auto train_origins = data::window_origins(ds, mc.history, mc.horizon, data::Split::train);
  data::window_origins(ds, mc.history, mc.horizon, data::Split::val);
  data::window_origins(ds, mc.history, mc.horizon, data::Split::test);

  const auto& params = model.params().entries();
  OptimState opt;
  opt.beta1 = config.adam_beta1;
  opt.beta2 = config.adam_beta2;
  opt.eps = config.adam_eps;
  // Separate stream from the one used for initialization.
  std::mt19937_64 rng(mc.seed ^ 0x9e3779b97f4a7c15ULL);

  std::optional<std::vector<std::vector<T>>> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = train_origins;
  const std::size_t per_epoch =
      config.epoch_windows == 0 ? order.size() : std::min(order.size(), config.epoch_windows);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, config.schedule);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < per_epoch; start += config.batch_size) {
        const std::size_t end = std::min(per_epoch, start + config.batch_size);
        std::vector<std::size_t> chunk(order.begin() + start, order.begin() + end);
        const auto batch = data::make_batch(ds, chunk, mc.history, mc.horizon);
        auto x = Tensor<T>::constant({batch.size, mc.nodes, mc.history, mc.input_channels},
                                     std::vector<T>(batch.input.begin(), batch.input.end()));
        auto y = Tensor<T>::constant({batch.size, mc.nodes, mc.horizon, mc.output_channels},
                                     std::vector<T>(batch.target.begin(), batch.target.end()));
        model.params().zero_grad();
        auto loss = engine::mae_loss(model.forward(x, graphs::Mode::train, &rng), y);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
        engine::backward(loss);
        if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
        adam_step(params, opt, lr);
        loss_sum += lv;
        ++batches;
      }
    } catch (const NumericError& e) {
      report.diverged = true;
      report.failure = e.what();
      break;
    }

    const auto val = evaluate(model, ds, data::Split::val);
    EpochRecord rec{epoch, lr, batches ? loss_sum / static_cast<double>(batches) : 0.0, val.mae, val.rmse,
                    seconds_since(epoch_start)};
    report.history.push_back(rec);
    if (val.mae < best_val) {
      best_val = val.mae;
      best = snapshot(params);
      report.best_epoch = epoch;
      if (!options.checkpoint_path.empty()) {
        blocks::save_checkpoint(options.checkpoint_path, options.config_text, model.params());
        report.checkpoint_written = true;
      }
    }
    if (options.log) {
      nlohmann::json line = {{"event", "epoch"},        {"epoch", rec.epoch},       {"lr", rec.lr},
                             {"train_loss", rec.train_loss}, {"val_mae", rec.val_mae}, {"val_rmse", rec.val_rmse},
                             {"seconds", rec.seconds}};
      *options.log << line.dump() << '\n' << std::flush;
    }
  }

  if (best) restore(params, *best);
  if (!report.diverged || best) report.test = evaluate(model, ds, data::Split::test);
  report.wall_seconds = seconds_since(wall_start);
  if (options.log) *options.log << summary_json(report) << '\n' << std::flush;
  return report;
}

std::string summary_json(const RunReport& r) {
  nlohmann::json j = {{"event", "summary"},
                      {"epochs_run", r.history.size()},
                      {"diverged", r.diverged},
                      {"wall_seconds", r.wall_seconds},
                      {"seed", r.seed},
                      {"checkpoint_written", r.checkpoint_written},
                      {"config", r.config_text}};
  j["best_epoch"] = r.best_epoch ? nlohmann::json(*r.best_epoch) : nlohmann::json(nullptr);
  j["test"] = r.test ? metrics_json(*r.test) : nlohmann::json(nullptr);
  if (!r.failure.empty()) j["failure"] = r.failure;
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& e : r.history) losses.push_back(e.train_loss);
  j["train_loss"] = losses;
  return j.dump();
}

#define SAMSGL_INSTANTIATE(T)                                                                           \
  template void adam_step(const std::vector<NamedTensor<T>>&, OptimState&, double);                    \
  template double clip_grad_norm(const std::vector<NamedTensor<T>>&, double);                          \
  template Predictor model_predictor(const blocks::Model<T>&);                                          \
  template RunReport train_loop(blocks::Model<T>&, const data::Dataset&, const TrainConfig&, const TrainOptions&);

SAMSGL_INSTANTIATE(float)
SAMSGL_INSTANTIATE(double)
#undef SAMSGL_INSTANTIATE

}  // namespace samsgl::train
