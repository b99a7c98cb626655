#pragma once

#include <cstddef>
#include <initializer_list>
#include <utility>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psnet/errors.hpp"

namespace psnet {

// Batch-as-rows, row-major everywhere: a batch of n samples with d features is n x d.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using ConstRef = Eigen::Ref<const Matrix<Scalar>>;

using Index = Eigen::Index;

template <typename Derived>
std::string shape_of(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

/// Zero-filled matrix; empty shapes are rejected.
template <typename Scalar>
Matrix<Scalar> zeros(Index rows, Index cols) {
  if (rows < 1 || cols < 1) {
    throw ShapeError("empty matrix " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Matrix<Scalar>::Zero(rows, cols);
}

/// Builds a matrix from nested row lists, e.g. from_rows<double>({{1, 2}, {3, 4}}).
template <typename Scalar>
Matrix<Scalar> from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
  const auto n = static_cast<Index>(rows.size());
  const auto d = n > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
  Matrix<Scalar> m = zeros<Scalar>(n, d);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != d) {
      throw ShapeError("ragged row list");
    }
    Index j = 0;
    for (Scalar v : row) {
      m(i, j++) = v;
    }
    ++i;
  }
  return m;
}

template <typename A, typename B>
Matrix<typename A::Scalar> matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a) + " * " + shape_of(b));
  }
  return a * b;
}

/// Horizontal join of parts in list order.
template <typename Scalar>
Matrix<Scalar> concat_cols(const std::vector<ConstRef<Scalar>>& parts) {
  if (parts.empty()) {
    throw ShapeError("concat_cols: empty part list");
  }
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_of(parts.front()) + " vs " + shape_of(p));
    }
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p;
    offset += p.cols();
  }
  return out;
}

template <typename Derived>
Matrix<typename Derived::Scalar> slice_cols(const Eigen::MatrixBase<Derived>& m, Index offset, Index count) {
  if (offset < 0 || count < 1 || offset + count > m.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                     ") out of " + shape_of(m));
  }
  return m.middleCols(offset, count);
}

template <typename Derived, typename V>
Matrix<typename Derived::Scalar> add_row_vector(const Eigen::MatrixBase<Derived>& m,
                                                const Eigen::MatrixBase<V>& v) {
  if (v.rows() != 1 || v.cols() != m.cols()) {
    throw ShapeError("add_row_vector: " + shape_of(m) + " + " + shape_of(v));
  }
  return m.rowwise() + v.derived().row(0);
}

template <typename Derived, typename F>
Matrix<typename Derived::Scalar> map_elementwise(const Eigen::MatrixBase<Derived>& m, F&& f) {
  return m.unaryExpr(std::forward<F>(f));
}

template <typename Derived>
Matrix<typename Derived::Scalar> transpose(const Eigen::MatrixBase<Derived>& m) {
  return m.transpose();
}

template <typename A, typename B>
Matrix<typename A::Scalar> hadamard(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("hadamard: " + shape_of(a) + " vs " + shape_of(b));
  }
  return a.cwiseProduct(b);
}

template <typename Derived>
Matrix<typename Derived::Scalar> scale(const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar s) {
  return m * s;
}

} // namespace psnet
