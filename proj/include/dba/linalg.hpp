#pragma once
//
// Dense row-major matrices, flattened parameter-vector algebra, and the
// truncated SVD used to compress global-gradient tensors.
//

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dba/errors.hpp"
#include "dba/rng.hpp"

namespace dba {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// Concatenation of all parameter tensors of one model, row-major in a fixed
// registration order. Every FlatVector produced for a given model uses the
// same ordering, so they can be combined coordinate-wise.
struct FlatVector {
  std::vector<double> data;

  FlatVector() = default;
  explicit FlatVector(std::size_t n) : data(n, 0.0) {}
  explicit FlatVector(std::vector<double> values) : data(std::move(values)) {}

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

// Rank-r factors u * diag(s) * v^T with orthonormal u, v columns and
// singular values sorted descending.
struct SvdFactors {
  Matrix u;               // rows x r
  std::vector<double> s;  // r, descending, >= 0
  Matrix v;               // cols x r
};

inline double dot(const FlatVector& a, const FlatVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;  // sequential order keeps reductions bit-stable
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(const FlatVector& a) { return std::sqrt(dot(a, a)); }

// Removes from d its projection onto `against`.
inline FlatVector orthogonalize(const FlatVector& d, const FlatVector& against) {
  const double ref2 = dot(against, against);
  if (ref2 <= 0.0) throw std::invalid_argument("orthogonalize: zero reference vector");
  const double coeff = dot(d, against) / ref2;
  FlatVector out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] - coeff * against[i];
  return out;
}

namespace detail {

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

// One-sided Jacobi SVD of a tall matrix (rows >= cols): orthogonalizes the
// columns of `a` by plane rotations, accumulating them in `v`, so that on
// return  a_in = u * diag(s) * v^T.  Plain and deterministic; desk-scale
// matrices converge in a handful of sweeps.
inline void jacobi_svd_tall(Matrix a, Matrix& u, std::vector<double>& s, Matrix& v) {
  const std::size_t rows = a.rows;
  const std::size_t n = a.cols;
  v = Matrix::identity(n);

  const double tol = 1e-14;
  const int max_sweeps = 60;
  bool rotated = true;
  for (int sweep = 0; sweep < max_sweeps && rotated; ++sweep) {
    rotated = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double aii = 0.0, ajj = 0.0, aij = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
          const double x = a(k, i), y = a(k, j);
          aii += x * x;
          ajj += y * y;
          aij += x * y;
        }
        if (aii == 0.0 || ajj == 0.0) continue;
        if (std::abs(aij) <= tol * std::sqrt(aii * ajj)) continue;
        rotated = true;
        const double zeta = (ajj - aii) / (2.0 * aij);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (std::size_t k = 0; k < rows; ++k) {
          const double x = a(k, i), y = a(k, j);
          a(k, i) = c * x - sn * y;
          a(k, j) = sn * x + c * y;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double x = v(k, i), y = v(k, j);
          v(k, i) = c * x - sn * y;
          v(k, j) = sn * x + c * y;
        }
      }
    }
  }

  s.assign(n, 0.0);
  u = Matrix(rows, n);
  for (std::size_t j = 0; j < n; ++j) {
    double nj = 0.0;
    for (std::size_t k = 0; k < rows; ++k) nj += a(k, j) * a(k, j);
    s[j] = std::sqrt(nj);
  }

  // Sort columns by singular value, descending.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });
  Matrix a_sorted(rows, n), v_sorted(n, n);
  std::vector<double> s_sorted(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    s_sorted[j] = s[src];
    for (std::size_t k = 0; k < rows; ++k) a_sorted(k, j) = a(k, src);
    for (std::size_t k = 0; k < n; ++k) v_sorted(k, j) = v(k, src);
  }
  s = std::move(s_sorted);
  v = std::move(v_sorted);

  // Normalize left vectors; complete columns whose singular value is
  // numerically zero so that u keeps orthonormal columns.
  const double tiny = (s[0] > 0.0 ? s[0] : 1.0) * 1e-13 * static_cast<double>(rows);
  Rng completion_rng(0x5bd1e995u);
  for (std::size_t j = 0; j < n; ++j) {
    if (s[j] > tiny) {
      for (std::size_t k = 0; k < rows; ++k) u(k, j) = a_sorted(k, j) / s[j];
      continue;
    }
    // Deficient direction: draw a vector, Gram-Schmidt it against the
    // columns fixed so far (two passes), normalize.
    for (int attempt = 0; attempt < 16; ++attempt) {
      std::vector<double> cand(rows);
      for (std::size_t k = 0; k < rows; ++k) cand[k] = completion_rng.normal();
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t p = 0; p < j; ++p) {
          double proj = 0.0;
          for (std::size_t k = 0; k < rows; ++k) proj += cand[k] * u(k, p);
          for (std::size_t k = 0; k < rows; ++k) cand[k] -= proj * u(k, p);
        }
      }
      double cn = 0.0;
      for (double x : cand) cn += x * x;
      cn = std::sqrt(cn);
      if (cn > 1e-6) {
        for (std::size_t k = 0; k < rows; ++k) u(k, j) = cand[k] / cn;
        break;
      }
    }
  }
}

}  // namespace detail

// Best rank-r approximation factors of m. Exact Jacobi SVD of the full
// matrix, truncated to r: desk matrices are small enough that this is cheap,
// and it meets the Eckart-Young bound by construction.
inline SvdFactors truncated_svd(const Matrix& m, std::size_t r) {
  if (m.rows == 0 || m.cols == 0) throw std::invalid_argument("truncated_svd: empty matrix");
  if (r < 1 || r > std::min(m.rows, m.cols))
    throw std::invalid_argument("truncated_svd: rank out of range");
  for (double x : m.data)
    if (!std::isfinite(x)) throw NumericalError("truncated_svd: non-finite input");

  Matrix u_full, v_full;
  std::vector<double> s_full;
  if (m.rows >= m.cols) {
    detail::jacobi_svd_tall(m, u_full, s_full, v_full);
  } else {
    // Work on the transpose and swap the factor roles.
    detail::jacobi_svd_tall(detail::transpose(m), v_full, s_full, u_full);
  }

  SvdFactors f;
  f.u = Matrix(m.rows, r);
  f.v = Matrix(m.cols, r);
  f.s.assign(s_full.begin(), s_full.begin() + static_cast<std::ptrdiff_t>(r));
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t k = 0; k < m.rows; ++k) f.u(k, j) = u_full(k, j);
    for (std::size_t k = 0; k < m.cols; ++k) f.v(k, j) = v_full(k, j);
  }
  return f;
}

inline Matrix reconstruct(const SvdFactors& f) {
  const std::size_t r = f.s.size();
  if (f.u.cols != r || f.v.cols != r)
    throw std::invalid_argument("reconstruct: factor shape mismatch");
  Matrix out(f.u.rows, f.v.rows);
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t k = 0; k < r; ++k) {
      const double uis = f.u(i, k) * f.s[k];
      for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += uis * f.v(j, k);
    }
  return out;
}

inline double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double x : m.data) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace dba
