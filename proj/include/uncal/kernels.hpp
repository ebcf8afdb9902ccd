#pragma once

// Dense kernels used by the probe and representation analytics.
//
// Every kernel exists twice: an OpenMP version in `uncal::kernels` and a
// plain loop in `uncal::kernels::serial`. Each parallel kernel distributes
// independent output elements across threads and accumulates every element
// in the same order as the serial loop, so both produce bit-identical
// results for any thread count.

#include <span>
#include <vector>

#include "uncal/matrix.hpp"

namespace uncal::kernels {

/// Column means of x.
std::vector<double> column_means(const Matrix& x);

/// Returns x with column means subtracted.
Matrix center_columns(const Matrix& x);

/// aᵀb for a (n×p) and b (n×q); result p×q.
Matrix cross_product(const Matrix& a, const Matrix& b);

/// x·v, one entry per row.
std::vector<double> matvec(const Matrix& x, std::span<const double> v);

/// xᵀ·v, one entry per column.
std::vector<double> matvec_transposed(const Matrix& x, std::span<const double> v);

/// Sum of squares of all entries.
double frobenius_sq(const Matrix& x);

namespace serial {

std::vector<double> column_means(const Matrix& x);
Matrix center_columns(const Matrix& x);
Matrix cross_product(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& x, std::span<const double> v);
std::vector<double> matvec_transposed(const Matrix& x, std::span<const double> v);
double frobenius_sq(const Matrix& x);

}  // namespace serial

}  // namespace uncal::kernels
