#include "intentkg/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace intentkg {

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r ? static_cast<int>(rows.begin()->size()) : 0;
  Mat m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    int j = 0;
    for (double v : row) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

bool Mat::all_finite() const {
  for (double v : d_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void matmul_acc(Mat& c, const Mat& a, const Mat& b, bool trans_a, bool trans_b, double scale) {
  const int m = trans_a ? a.cols() : a.rows();
  const int k = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  if (k != kb || c.rows() != m || c.cols() != n) {
    throw std::invalid_argument("matmul: shape mismatch");
  }
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (int p = 0; p < k; ++p) {
        const double av = arow[p] * scale;
        if (av == 0.0) continue;
        const double* brow = b.row(p);
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      const double* arow = a.row(i);
      double* crow = c.row(i);
      for (int j = 0; j < n; ++j) {
        const double* brow = b.row(j);
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] += s * scale;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int p = 0; p < k; ++p) {
      const double* arow = a.row(p);
      const double* brow = b.row(p);
      for (int i = 0; i < m; ++i) {
        const double av = arow[i] * scale;
        if (av == 0.0) continue;
        double* crow = c.row(i);
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* crow = c.row(i);
      for (int p = 0; p < k; ++p) {
        const double av = a.at(p, i) * scale;
        if (av == 0.0) continue;
        for (int j = 0; j < n; ++j) crow[j] += av * b.at(j, p);
      }
    }
  }
}

Mat matmul(const Mat& a, const Mat& b, bool trans_a, bool trans_b) {
  const int m = trans_a ? a.cols() : a.rows();
  const int n = trans_b ? b.rows() : b.cols();
  Mat c(m, n);
  matmul_acc(c, a, b, trans_a, trans_b, 1.0);
  return c;
}

namespace {

// two-sum: s = a+b exactly as (s, err)
inline void two_sum(double a, double b, double& s, double& err) {
  s = a + b;
  double bv = s - a;
  err = (a - (s - bv)) + (b - bv);
}

}  // namespace

double exact_sum(const double* v, size_t n) {
  // Shewchuk's growing-expansion sum, as used by Python's math.fsum.
  // Partials are non-overlapping and ordered by increasing magnitude; the
  // final rounding handles the half-way tie case.
  std::vector<double> partials;
  for (size_t idx = 0; idx < n; ++idx) {
    double x = v[idx];
    size_t i = 0;
    for (size_t j = 0; j < partials.size(); ++j) {
      double y = partials[j];
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      double hi, lo;
      two_sum(x, y, hi, lo);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  // Round from the top; correct for a halfway case against the tail's sign.
  double total = partials.back();
  size_t k = partials.size() - 1;
  double err = 0.0;
  while (k > 0) {
    double x = total;
    double y = partials[--k];
    two_sum(x, y, total, err);
    if (err != 0.0) break;
  }
  if (err != 0.0 && k > 0) {
    if ((err < 0.0 && partials[k - 1] < 0.0) || (err > 0.0 && partials[k - 1] > 0.0)) {
      double y = err * 2.0;
      double x = total + y;
      if (y == x - total) total = x;
    }
  }
  return total;
}

Mat matmul_exact(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul_exact: shape mismatch");
  Mat c(a.rows(), b.cols());
  std::vector<double> terms(a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    for (int j = 0; j < b.cols(); ++j) {
      for (int p = 0; p < a.cols(); ++p) terms[p] = arow[p] * b.at(p, j);
      c.at(i, j) = exact_sum(terms.data(), terms.size());
    }
  }
  return c;
}

void add_inplace(Mat& a, const Mat& b, double scale) {
  if (!a.same_shape(b)) throw std::invalid_argument("add_inplace: shape mismatch");
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] += scale * b.data()[i];
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Mat cholesky_solve(const Mat& a, const Mat& b) {
  const int n = a.rows();
  if (a.cols() != n || b.rows() != n) throw std::invalid_argument("cholesky_solve: shape mismatch");
  Mat l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a.at(i, j);
      for (int k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (s <= 0.0) throw std::invalid_argument("cholesky_solve: matrix not positive definite");
        l.at(i, i) = std::sqrt(s);
      } else {
        l.at(i, j) = s / l.at(j, j);
      }
    }
  }
  Mat x = b;
  // forward substitution L y = b
  for (int c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < n; ++i) {
      double s = x.at(i, c);
      for (int k = 0; k < i; ++k) s -= l.at(i, k) * x.at(k, c);
      x.at(i, c) = s / l.at(i, i);
    }
    // back substitution L^T x = y
    for (int i = n - 1; i >= 0; --i) {
      double s = x.at(i, c);
      for (int k = i + 1; k < n; ++k) s -= l.at(k, i) * x.at(k, c);
      x.at(i, c) = s / l.at(i, i);
    }
  }
  return x;
}

double dot(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const double* a, size_t n) {
  return std::sqrt(dot(a, a, n));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  double na = l2_norm(a.data(), a.size());
  double nb = l2_norm(b.data(), b.size());
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a.data(), b.data(), a.size()) / (na * nb);
}

}  // namespace intentkg
