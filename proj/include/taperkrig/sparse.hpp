#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "taperkrig/geometry.hpp"
#include "taperkrig/kernels.hpp"
#include "taperkrig/sparse_pattern.hpp"

namespace taperkrig {

// Symmetric positive-definite matrix stored as its lower triangle.
struct SparseSPD {
  SparsePattern pattern;
  std::vector<double> values;  // aligned with pattern.row_ind

  std::int32_t n() const { return pattern.n; }
  std::int64_t nnz_lower() const { return pattern.nnz(); }
  double max_diagonal() const;
};

// Fraction of structurally nonzero entries in the full symmetric matrix.
double density(const SparseSPD& matrix);

// Fill-reducing ordering: approximate minimum degree on the quotient graph
// with aggressive element absorption. Returns the elimination order
// (perm[k] = original index of the k-th pivot).
std::vector<std::int32_t> amd_order(const SparsePattern& lower);

// Symbolic analysis bound to a pattern: permutation, elimination tree and
// the column pointers of L. Reused across numeric factorizations with
// identical structure (likelihood evaluations at different parameters).
struct SymbolicChol {
  std::int32_t n = 0;
  std::vector<std::int32_t> perm;      // new -> old
  std::vector<std::int32_t> perm_inv;  // old -> new
  std::vector<std::int32_t> parent;    // elimination tree
  std::vector<std::int64_t> l_col_ptr; // column pointers of L
  // Permuted upper-triangular pattern (column k = row k of PAP^T's lower
  // part) plus the map from each entry back into the input value array.
  std::vector<std::int64_t> u_col_ptr;
  std::vector<std::int32_t> u_row_ind;
  std::vector<std::int64_t> u_source;

  std::int64_t l_nnz() const { return l_col_ptr.empty() ? 0 : l_col_ptr.back(); }
};

SymbolicChol analyze(const SparsePattern& lower, bool reorder = true);

// Sparse Cholesky factor P A P^T = L L^T with cached log-determinant.
class CholFactor {
 public:
  std::int32_t n() const { return n_; }
  std::int64_t nnz() const { return static_cast<std::int64_t>(row_ind_.size()); }
  double logdet() const { return logdet_; }
  const std::vector<std::int32_t>& perm() const { return perm_; }

  // Factor storage (lower CSC, diagonal first in each column); exposed for
  // diagnostics and verification.
  std::span<const std::int64_t> col_ptr() const { return col_ptr_; }
  std::span<const std::int32_t> row_ind() const { return row_ind_; }
  std::span<const double> values() const { return values_; }

  // Solves A x = rhs via the two triangular solves. Throws
  // std::invalid_argument on a length mismatch. Factors are immutable, so
  // concurrent solves are safe; each call owns its workspace.
  std::vector<double> solve(std::span<const double> rhs) const;

  // In-place variant writing into x (length n).
  void solve(std::span<const double> rhs, std::span<double> x) const;

  // y = L x, both in elimination order; the sparse Gaussian sampler maps
  // the result back with perm().
  void apply_l(std::span<const double> x, std::span<double> y) const;

  friend CholFactor factorize_with(const SymbolicChol& symbolic, std::span<const double> values,
                                   double max_diagonal);

 private:
  std::int32_t n_ = 0;
  std::vector<std::int32_t> perm_;
  std::vector<std::int32_t> perm_inv_;
  std::vector<std::int64_t> col_ptr_;
  std::vector<std::int32_t> row_ind_;
  std::vector<double> values_;
  double logdet_ = 0.0;
};

// Up-looking simplicial numeric factorization on a fixed symbolic
// structure; values are aligned with the pattern the symbolic analysis was
// built from, and max_diagonal scales the pivot tolerance. A pivot at or
// below 1e-14 * max_diagonal raises NotPositiveDefiniteError; pivots are
// never perturbed.
CholFactor factorize_with(const SymbolicChol& symbolic, std::span<const double> values,
                          double max_diagonal);

struct FactorizeOptions {
  bool reorder = true;  // false keeps the natural order (debugging)
};

CholFactor factorize(const SparseSPD& matrix, const FactorizeOptions& options = {});

double logdet(const CholFactor& factor);

// Covariance matrix on the taper-induced pattern. Models with compact
// support use their support radius; a plain Matern model needs either an
// explicit truncation radius or n <= 5000 (dense fallback), otherwise a
// SizeError is raised.
SparseSPD assemble(const Dataset& dataset, const CovarianceModel& model,
                   std::optional<double> truncation = {}, int n_threads = 0);

// Value fill on a precomputed pattern (column-parallel); dist is aligned
// with pattern.row_ind.
void fill_values(const SparsePattern& pattern, std::span<const double> dist,
                 const CovarianceModel& model, std::vector<double>& values, int n_threads = 0);

inline constexpr std::int32_t kDenseFallbackLimit = 5000;

// MatrixMarket coordinate dump ("%%MatrixMarket matrix coordinate real
// symmetric", 1-based indices) for debugging.
void write_matrix_market(std::ostream& out, const SparseSPD& matrix);

}  // namespace taperkrig
