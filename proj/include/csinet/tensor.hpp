#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "csinet/errors.hpp"
#include "csinet/rng.hpp"

namespace csinet::ad {

// Dense row-major tensor, templated on scalar. Heavy lifting (matmul) maps
// the buffer into Eigen.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)), data(numel_of(shape), S(0)) {}

  static std::size_t numel_of(const std::vector<int>& shp) {
    std::size_t n = 1;
    for (int d : shp) {
      if (d < 0) throw DimensionError("tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<int> shp, S v) {
    Tensor t(std::move(shp));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor from(std::vector<int> shp, std::vector<S> values) {
    Tensor t;
    t.shape = std::move(shp);
    if (values.size() != numel_of(t.shape)) throw DimensionError("tensor: data/shape mismatch");
    t.data = std::move(values);
    return t;
  }

  // Truncated-normal init (resample outside 2 std), std sigma.
  static Tensor trunc_normal(std::vector<int> shp, S sigma, Rng& rng) {
    Tensor t(std::move(shp));
    for (S& v : t.data) {
      double z = rng.normal();
      while (std::abs(z) > 2.0) z = rng.normal();
      v = static_cast<S>(z) * sigma;
    }
    return t;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndims() const { return static_cast<int>(shape.size()); }

  S& operator[](std::size_t i) { return data[i]; }
  S operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  using EigenMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  EigenMap as_matrix(int rows, int cols) { return EigenMap(data.data(), rows, cols); }
  ConstEigenMap as_matrix(int rows, int cols) const { return ConstEigenMap(data.data(), rows, cols); }
};

template <class S>
Tensor<S> cast_tensor(const Tensor<float>& t) {
  Tensor<S> out(t.shape);
  for (std::size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<S>(t.data[i]);
  return out;
}

}  // namespace csinet::ad
