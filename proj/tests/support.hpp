#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "samsgl/engine/ops.hpp"

namespace samsgl::testing {

using engine::Tensor;

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor<double> random_param(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  auto v = random_values(shape_numel(shape), rng, -scale, scale);
  return Tensor<double>::parameter(std::move(shape), std::move(v));
}

inline Tensor<double> random_const(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  auto v = random_values(shape_numel(shape), rng, -scale, scale);
  return Tensor<double>::constant(std::move(shape), std::move(v));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("samsgl-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace samsgl::testing
