#include "rnnlab/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace rnnlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("matrix data length " + std::to_string(data_.size()) +
                          " does not match shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::initializer_list<double> values) {
  return Matrix(1, values.size(), std::vector<double>(values));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw InvalidArgument("ragged rows in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + a.shape_string() +
                          " vs " + b.shape_string());
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

namespace {

// Row-major i-k-j kernel. For a fixed (i, j) the k loop runs in ascending
// order, which is the same accumulation sequence as the textbook triple loop.
void gemm_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Matrix gemm(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("gemm: inner dimensions differ (" + a.shape_string() + " x " +
                          b.shape_string() + ")");
  }
  Matrix c(a.rows(), b.cols());
  gemm_kernel(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  return c;
}

void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw InvalidArgument("gemm_acc: shapes " + a.shape_string() + " x " + b.shape_string() +
                          " -> " + c.shape_string());
  }
  gemm_kernel(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols()) {
    throw InvalidArgument("gemm_tn_acc: shapes " + a.shape_string() + "^T x " +
                          b.shape_string() + " -> " + c.shape_string());
  }
  const std::size_t n = b.cols();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const auto arow = a.row(p);
    const auto brow = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = arow[i];
      auto crow = c.row(i);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows()) {
    throw InvalidArgument("gemm_nt_acc: shapes " + a.shape_string() + " x " +
                          b.shape_string() + "^T -> " + c.shape_string());
  }
  const Matrix bt = transpose(b);
  gemm_kernel(a.data().data(), bt.data().data(), c.data().data(), a.rows(), a.cols(),
              bt.cols());
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  hadamard_inplace(out, b);
  return out;
}

void hadamard_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void add_row_broadcast(Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw InvalidArgument("add_row_broadcast: bias " + bias.shape_string() + " for " +
                          m.shape_string());
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] += bias[j];
  }
}

void add_column_sums(const Matrix& m, Matrix& sums) {
  if (sums.rows() != 1 || sums.cols() != m.cols()) {
    throw InvalidArgument("add_column_sums: target " + sums.shape_string() + " for " +
                          m.shape_string());
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t j = 0; j < m.cols(); ++j) sums[j] += row[j];
  }
}

double sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v;
  return s;
}

double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.data()) best = std::max(best, std::abs(v));
  return best;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace rnnlab
