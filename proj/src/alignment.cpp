#include "samsgl/alignment.hpp"

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>

namespace samsgl::alignment {

namespace {

// Real-to-complex / complex-to-real plans for one transform length, with
// scratch buffers. FFTW planning is not thread-safe, so plans are built under
// a lock and cached per length; each thread gets its own scratch.
class FftPlan {
 public:
  explicit FftPlan(std::size_t len) : len_(len), bins_(len / 2 + 1) {
    real_ = fftw_alloc_real(len_);
    spec_ = fftw_alloc_complex(bins_);
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(len_), real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(len_), spec_, real_, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t bins() const { return bins_; }

  // Transforms `stride`-spaced samples of `src` into `out` (bins() entries).
  template <typename T>
  void forward(const T* src, std::size_t stride, std::complex<double>* out) {
    for (std::size_t t = 0; t < len_; ++t) real_[t] = static_cast<double>(src[t * stride]);
    fftw_execute(forward_);
    for (std::size_t f = 0; f < bins_; ++f) out[f] = {spec_[f][0], spec_[f][1]};
  }

  // Unnormalized inverse; result is L times the true inverse transform.
  void inverse(const std::complex<double>* in, double* out) {
    for (std::size_t f = 0; f < bins_; ++f) {
      spec_[f][0] = in[f].real();
      spec_[f][1] = in[f].imag();
    }
    fftw_execute(inverse_);
    for (std::size_t t = 0; t < len_; ++t) out[t] = real_[t];
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t len_;
  std::size_t bins_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

FftPlan& plan_for(std::size_t len) {
  thread_local std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[len];
  if (!slot) slot = std::make_unique<FftPlan>(len);
  return *slot;
}

}  // namespace

ReferenceStrategy ReferenceStrategy::parse(const std::string& text) {
  if (text == "mean") return mean();
  const std::string prefix = "node:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string digits = text.substr(prefix.size());
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
      return node(std::stoul(digits));
    }
  }
  throw ConfigError("reference strategy must be 'mean' or 'node:<index>', got '" + text + "'");
}

std::string ReferenceStrategy::to_string() const {
  return kind == Kind::mean ? "mean" : "node:" + std::to_string(node_index);
}

template <typename T>
QueryKey<T> project_qk(const Tensor<T>& x, const ProjectionParams<T>& params) {
  return {engine::fully_connected(x, params.w_q), engine::fully_connected(x, params.w_k)};
}

template <typename T>
Tensor<T> reference_series(const Tensor<T>& query, const ReferenceStrategy& strategy) {
  if (query.rank() != 4) throw DimensionError("reference_series expects [B,N,L,D], got " + shape_str(query.shape()));
  if (strategy.kind == ReferenceStrategy::Kind::mean) return engine::mean_axis1(query);
  if (strategy.node_index >= query.dim(1)) {
    throw DimensionError("reference node " + std::to_string(strategy.node_index) + " out of range for " +
                         std::to_string(query.dim(1)) + " nodes");
  }
  return engine::index_axis1(query, strategy.node_index);
}

template <typename T>
Tensor<T> correlation_scores(const Tensor<T>& reference, const Tensor<T>& key) {
  if (reference.rank() != 3 || key.rank() != 4 || key.dim(0) != reference.dim(0) ||
      key.dim(2) != reference.dim(1) || key.dim(3) != reference.dim(2)) {
    throw DimensionError("correlation_scores: reference " + shape_str(reference.shape()) + " vs key " +
                         shape_str(key.shape()));
  }
  const std::size_t batch = key.dim(0), nodes = key.dim(1), len = key.dim(2), chans = key.dim(3);
  if (len < 2) throw DimensionError("correlation_scores needs L >= 2");

  auto& plan = plan_for(len);
  const std::size_t bins = plan.bins();
  const double inv_len = 1.0 / static_cast<double>(len);
  std::vector<std::complex<double>> ref_spec(chans * bins), key_spec(bins), acc(bins);
  std::vector<double> series(len);
  std::vector<T> out(batch * nodes * len);
  const T* rv = reference.values().data();
  const T* kv = key.values().data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t d = 0; d < chans; ++d) plan.forward(rv + b * len * chans + d, chans, ref_spec.data() + d * bins);
    for (std::size_t i = 0; i < nodes; ++i) {
      std::fill(acc.begin(), acc.end(), std::complex<double>{});
      const T* krow = kv + (b * nodes + i) * len * chans;
      for (std::size_t d = 0; d < chans; ++d) {
        plan.forward(krow + d, chans, key_spec.data());
        for (std::size_t f = 0; f < bins; ++f) acc[f] += ref_spec[d * bins + f] * std::conj(key_spec[f]);
      }
      plan.inverse(acc.data(), series.data());
      for (std::size_t t = 0; t < len; ++t) out[(b * nodes + i) * len + t] = static_cast<T>(series[t] * inv_len);
    }
  }

  return engine::make_op<T>({batch, nodes, len}, std::move(out), {reference, key},
                            [batch, nodes, len, chans](engine::Node<T>& self) {
    // zeta_i = corr(ref, k_i):  d ref = sum_i conv(g_i, k_i),  d k_i = corr(ref, g_i).
    auto& ref = *self.inputs[0];
    auto& k = *self.inputs[1];
    auto& plan = plan_for(len);
    const std::size_t bins = plan.bins();
    const double inv_len = 1.0 / static_cast<double>(len);
    std::vector<std::complex<double>> ref_spec(chans * bins), key_spec(bins), grad_spec(bins), acc(bins);
    std::vector<double> series(len);
    T* gref = ref.requires_grad ? ref.grad_buffer().data() : nullptr;
    T* gkey = k.requires_grad ? k.grad_buffer().data() : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t d = 0; d < chans; ++d)
        plan.forward(ref.value.data() + b * len * chans + d, chans, ref_spec.data() + d * bins);
      std::vector<std::complex<double>> ref_acc(chans * bins);
      for (std::size_t i = 0; i < nodes; ++i) {
        const std::size_t row = b * nodes + i;
        plan.forward(self.grad.data() + row * len, 1, grad_spec.data());
        for (std::size_t d = 0; d < chans; ++d) {
          if (gref) {
            plan.forward(k.value.data() + row * len * chans + d, chans, key_spec.data());
            for (std::size_t f = 0; f < bins; ++f) ref_acc[d * bins + f] += grad_spec[f] * key_spec[f];
          }
          if (gkey) {
            for (std::size_t f = 0; f < bins; ++f) acc[f] = ref_spec[d * bins + f] * std::conj(grad_spec[f]);
            plan.inverse(acc.data(), series.data());
            T* dst = gkey + row * len * chans + d;
            for (std::size_t t = 0; t < len; ++t) dst[t * chans] += static_cast<T>(series[t] * inv_len);
          }
        }
      }
      if (gref) {
        for (std::size_t d = 0; d < chans; ++d) {
          plan.inverse(ref_acc.data() + d * bins, series.data());
          T* dst = gref + b * len * chans + d;
          for (std::size_t t = 0; t < len; ++t) dst[t * chans] += static_cast<T>(series[t] * inv_len);
        }
      }
    }
  });
}

template <typename T>
DelayVector delays_from_scores(const Tensor<T>& scores) {
  if (scores.rank() < 1) throw DimensionError("delays_from_scores: scalar scores");
  const std::size_t len = scores.shape().back();
  const std::size_t rows = scores.size() / len;
  DelayVector delays(rows);
  const auto v = scores.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < len; ++t)
      if (v[r * len + t] > v[r * len + best]) best = t;
    delays[r] = (len - best) % len;
  }
  return delays;
}

template <typename T>
Tensor<T> align(const Tensor<T>& x, const DelayVector& delays) {
  if (x.rank() < 3) throw DimensionError("align expects [B,N,L,...], got " + shape_str(x.shape()));
  return engine::roll_time(x, 2, delays, true);
}

template <typename T>
Tensor<T> align_back(const Tensor<T>& x, const DelayVector& delays) {
  if (x.rank() < 3) throw DimensionError("align_back expects [B,N,L,...], got " + shape_str(x.shape()));
  return engine::roll_time(x, 2, delays, false);
}

template <typename T>
SeriesAlignedResult<T> series_aligned_graph_conv(const Tensor<T>& x, const Tensor<T>& adjacency,
                                                 const SeriesAlignedParams<T>& params,
                                                 const SeriesAlignedOptions& options) {
  if (x.rank() != 4) throw DimensionError("series_aligned_graph_conv expects [B,N,L,D], got " + shape_str(x.shape()));
  const std::size_t nodes = x.dim(1);
  if (adjacency.rank() != 2 || adjacency.dim(0) != nodes || adjacency.dim(1) != nodes) {
    throw DimensionError("series_aligned_graph_conv: adjacency " + shape_str(adjacency.shape()) + " for " +
                         std::to_string(nodes) + " nodes");
  }
  auto qk = project_qk(x, params.projection);
  auto ref = reference_series(qk.query, options.reference);
  auto scores = correlation_scores(ref, qk.key);

  SeriesAlignedResult<T> result;
  result.delays = options.frozen_delays ? *options.frozen_delays : delays_from_scores(scores);
  if (result.delays.size() != x.dim(0) * nodes) {
    throw DimensionError("series_aligned_graph_conv: " + std::to_string(result.delays.size()) +
                         " delays for " + std::to_string(x.dim(0) * nodes) + " series");
  }
  auto weights = options.normalize_scores ? engine::softmax_last(scores) : scores;
  auto aligned = align(x, result.delays);
  auto reweighted = engine::scale_rows(aligned, weights);
  auto convolved = engine::conv1d_same(reweighted, params.conv_kernel);
  auto mixed = engine::graph_aggregate(adjacency, convolved);
  result.output = align_back(mixed, result.delays);
  result.scores = scores;
  return result;
}

#define SAMSGL_INSTANTIATE(T)                                                                              \
  template QueryKey<T> project_qk(const Tensor<T>&, const ProjectionParams<T>&);                           \
  template Tensor<T> reference_series(const Tensor<T>&, const ReferenceStrategy&);                          \
  template Tensor<T> correlation_scores(const Tensor<T>&, const Tensor<T>&);                                \
  template DelayVector delays_from_scores(const Tensor<T>&);                                                \
  template Tensor<T> align(const Tensor<T>&, const DelayVector&);                                           \
  template Tensor<T> align_back(const Tensor<T>&, const DelayVector&);                                      \
  template SeriesAlignedResult<T> series_aligned_graph_conv(const Tensor<T>&, const Tensor<T>&,             \
                                                            const SeriesAlignedParams<T>&,                  \
                                                            const SeriesAlignedOptions&);

SAMSGL_INSTANTIATE(float)
SAMSGL_INSTANTIATE(double)
#undef SAMSGL_INSTANTIATE

}  // namespace samsgl::alignment
