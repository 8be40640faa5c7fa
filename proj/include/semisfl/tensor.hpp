#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace semisfl {

using Shape = std::vector<std::size_t>;

/// Raised when tensor shapes, layer configurations or protocol inputs break a contract.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major tensor of 64-bit values. The first dimension is the batch
/// dimension whenever the tensor holds activations.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;

  Tensor() = default;

  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), values(shape_numel(shape), fill) {
    for (auto d : shape)
      if (d == 0) throw ContractError("tensor dimensions must be positive, got " + shape_str(shape));
  }

  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    for (auto d : shape)
      if (d == 0) throw ContractError("tensor dimensions must be positive, got " + shape_str(shape));
    if (values.size() != shape_numel(shape))
      throw ContractError("tensor buffer length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t batch() const { return shape.empty() ? 0 : shape.front(); }

  /// Elements per batch row.
  std::size_t row_size() const { return shape.empty() ? 0 : values.size() / shape.front(); }

  Shape sample_shape() const { return Shape(shape.begin() + 1, shape.end()); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double* row(std::size_t b) { return values.data() + b * row_size(); }
  const double* row(std::size_t b) const { return values.data() + b * row_size(); }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor zeros_like() const { return Tensor(shape, 0.0); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
  }
};

/// Stack single-sample rows into a batch of shape (rows, sample_shape...).
inline Tensor stack_rows(const std::vector<std::vector<double>>& rows, const Shape& sample_shape) {
  if (rows.empty()) throw ContractError("cannot stack an empty batch");
  Shape s{rows.size()};
  s.insert(s.end(), sample_shape.begin(), sample_shape.end());
  Tensor t(s);
  const std::size_t n = shape_numel(sample_shape);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b].size() != n) throw ContractError("row length does not match sample shape");
    std::copy(rows[b].begin(), rows[b].end(), t.row(b));
  }
  return t;
}

inline void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.values.size() != src.values.size())
    throw ContractError("add: shape mismatch " + shape_str(dst.shape) + " vs " + shape_str(src.shape));
  for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
}

inline void scale_inplace(Tensor& t, double a) {
  for (double& v : t.values) v *= a;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.values.size() != b.values.size()) throw ContractError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

/// Row-wise L2 normalization of a (batch, width) tensor.
inline Tensor l2_normalize_rows(const Tensor& v) {
  Tensor out = v;
  const std::size_t w = v.row_size();
  for (std::size_t b = 0; b < v.batch(); ++b) {
    double n2 = 0.0;
    const double* r = v.row(b);
    for (std::size_t i = 0; i < w; ++i) n2 += r[i] * r[i];
    const double n = std::sqrt(n2);
    if (!(n > 0.0)) throw ContractError("cannot normalize a zero row");
    double* o = out.row(b);
    for (std::size_t i = 0; i < w; ++i) o[i] = r[i] / n;
  }
  return out;
}

/// Backward of l2_normalize_rows: dv = (dz - z (z . dz)) / |v|.
inline Tensor l2_normalize_rows_backward(const Tensor& v, const Tensor& dz) {
  Tensor dv = v.zeros_like();
  const std::size_t w = v.row_size();
  for (std::size_t b = 0; b < v.batch(); ++b) {
    const double* r = v.row(b);
    const double* g = dz.row(b);
    double n2 = 0.0;
    for (std::size_t i = 0; i < w; ++i) n2 += r[i] * r[i];
    const double n = std::sqrt(n2);
    double zg = 0.0;
    for (std::size_t i = 0; i < w; ++i) zg += (r[i] / n) * g[i];
    double* o = dv.row(b);
    for (std::size_t i = 0; i < w; ++i) o[i] = (g[i] - (r[i] / n) * zg) / n;
  }
  return dv;
}

}  // namespace semisfl
