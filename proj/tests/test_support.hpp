#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rnnlab/cells.hpp"
#include "rnnlab/matrix.hpp"
#include "rnnlab/rng.hpp"

namespace rnnlab::testing {

template <class T, class F>
void visit_tensors(T& obj, F&& f) {
  obj.for_each(f);
}
template <class F>
void visit_tensors(CellParams& p, F&& f) {
  for_each_tensor(p, f);
}
template <class F>
void visit_tensors(const CellParams& p, F&& f) {
  for_each_tensor(p, f);
}

template <class T>
void append_tensors(const T& obj, std::vector<double>& out) {
  visit_tensors(obj, [&](const auto&, const Matrix& m) {
    out.insert(out.end(), m.data().begin(), m.data().end());
  });
}

inline void append(const Matrix& m, std::vector<double>& out) {
  out.insert(out.end(), m.data().begin(), m.data().end());
}

/// Reads tensors back from `values` starting at `offset`; advances offset.
template <class T>
void read_tensors(T& obj, std::span<const double> values, std::size_t& offset) {
  visit_tensors(obj, [&](const auto&, Matrix& m) {
    for (double& v : m.data()) v = values[offset++];
  });
}

inline void read(Matrix& m, std::span<const double> values, std::size_t& offset) {
  for (double& v : m.data()) v = values[offset++];
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  return uniform_matrix(rng, rows, cols, lo, hi);
}

template <class T>
void randomize(T& obj, Rng& rng, double lo, double hi) {
  visit_tensors(obj, [&](const auto&, Matrix& m) { m = uniform_matrix(rng, m.rows(), m.cols(), lo, hi); });
}

inline double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace rnnlab::testing
