#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace intentkg {

// Row-major dense matrix of doubles. Small and deliberately plain; all the
// numerics in this project run on it.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), d_(static_cast<size_t>(rows) * cols, 0.0) {}

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }

  double& at(int r, int c) { return d_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return d_[static_cast<size_t>(r) * cols_ + c]; }
  double* row(int r) { return d_.data() + static_cast<size_t>(r) * cols_; }
  const double* row(int r) const { return d_.data() + static_cast<size_t>(r) * cols_; }

  std::vector<double>& data() { return d_; }
  const std::vector<double>& data() const { return d_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v) { d_.assign(d_.size(), v); }

  bool operator==(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> d_;
};

// C = op(A) * op(B) where op transposes when the flag is set.
Mat matmul(const Mat& a, const Mat& b, bool trans_a = false, bool trans_b = false);

// C += op(A) * op(B); shapes must already conform.
void matmul_acc(Mat& c, const Mat& a, const Mat& b, bool trans_a, bool trans_b, double scale = 1.0);

// A*B with order-independent accumulation: every output entry is the
// correctly rounded sum of its (rounded) products, so permuting the inner
// index yields bit-identical results. Used by the GCN aggregation step.
Mat matmul_exact(const Mat& a, const Mat& b);

// Correctly rounded sum of the values (Shewchuk partials, fsum-style).
double exact_sum(const double* v, size_t n);

void add_inplace(Mat& a, const Mat& b, double scale = 1.0);
Mat transpose(const Mat& a);

// Solves A X = B for symmetric positive-definite A via Cholesky.
Mat cholesky_solve(const Mat& a, const Mat& b);
double dot(const double* a, const double* b, size_t n);
double l2_norm(const double* a, size_t n);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace intentkg
