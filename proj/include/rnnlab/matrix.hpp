#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnlab {

/// Thrown when operands or arguments violate an operation's preconditions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Row vectors are 1 x n matrices.
///
/// Batched activations are stored one example per row, so a layer with
/// weights `w` (in x out) maps a batch `x` (B x in) to `x * w` (B x out).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::initializer_list<double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double value);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);

/// c = a * b. Each entry accumulates a(i,k) * b(k,j) for k = 0, 1, ... in
/// order, starting from zero, so results are reproducible bit for bit.
Matrix gemm(const Matrix& a, const Matrix& b);
/// c += a * b, same per-entry accumulation order as gemm.
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c);
/// c += a^T * b.
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);
/// c += a * b^T.
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& c);

// Elementwise helpers. Shapes must agree exactly.
Matrix hadamard(const Matrix& a, const Matrix& b);
void hadamard_inplace(Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
void axpy(double alpha, const Matrix& x, Matrix& y);  // y += alpha * x
/// Broadcasts a 1 x n bias to every row of m.
void add_row_broadcast(Matrix& m, const Matrix& bias);
/// Accumulates the column sums of m into a 1 x n matrix.
void add_column_sums(const Matrix& m, Matrix& sums);

double sum(const Matrix& m);
double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace rnnlab
