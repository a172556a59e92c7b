#include "taperkrig/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "taperkrig/errors.hpp"
#include "taperkrig/parallel.hpp"

namespace taperkrig {

double SparseSPD::max_diagonal() const {
  double m = 0.0;
  for (std::int32_t j = 0; j < pattern.n; ++j) {
    m = std::max(m, values[pattern.col_ptr[j]]);
  }
  return m;
}

double density(const SparseSPD& matrix) {
  const double n = static_cast<double>(matrix.n());
  return (2.0 * static_cast<double>(matrix.nnz_lower()) - n) / (n * n);
}

// ---------------------------------------------------------------------------
// Approximate minimum degree on the quotient graph.
//
// Variables carry a list of live adjacent variables (A) and a list of
// elements (cliques left behind by eliminated pivots). Eliminating pivot k
// forms L_k = A_k union the variable lists of k's elements; degrees of the
// touched variables are then re-approximated with the standard
// |A_i| + |L_k - 1| + sum |L_e \ L_k| bound, and elements whose list is
// contained in L_k are absorbed.
// ---------------------------------------------------------------------------
std::vector<std::int32_t> amd_order(const SparsePattern& lower) {
  const std::int32_t n = lower.n;
  std::vector<std::int32_t> perm(n);
  if (n == 0) return perm;

  std::vector<std::vector<std::int32_t>> adj(n);
  for (std::int32_t j = 0; j < n; ++j) {
    for (std::int64_t p = lower.col_ptr[j] + 1; p < lower.col_ptr[j + 1]; ++p) {
      const std::int32_t i = lower.row_ind[p];
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }

  std::vector<std::vector<std::int32_t>> elem(n);      // variable list of element e
  std::vector<std::vector<std::int32_t>> elems_of(n);  // elements adjacent to variable i
  std::vector<char> eliminated(n, 0);
  std::vector<char> elem_alive(n, 0);
  std::vector<std::int32_t> degree(n);

  // Doubly linked degree buckets; head insertion, deterministic.
  std::vector<std::int32_t> head(n + 1, -1), nxt(n, -1), prv(n, -1);
  auto bucket_insert = [&](std::int32_t i, std::int32_t d) {
    degree[i] = d;
    prv[i] = -1;
    nxt[i] = head[d];
    if (head[d] != -1) prv[head[d]] = i;
    head[d] = i;
  };
  auto bucket_remove = [&](std::int32_t i) {
    if (prv[i] != -1) {
      nxt[prv[i]] = nxt[i];
    } else {
      head[degree[i]] = nxt[i];
    }
    if (nxt[i] != -1) prv[nxt[i]] = prv[i];
  };

  for (std::int32_t i = 0; i < n; ++i) {
    bucket_insert(i, static_cast<std::int32_t>(adj[i].size()));
  }

  std::vector<std::int32_t> visit(n, -1);  // variable stamp = pivot step
  std::vector<std::int32_t> eseen(n, -1);  // element stamp
  std::vector<std::int32_t> ew(n, 0);      // |L_e \ L_k| per stamped element
  std::vector<std::int32_t> lk;
  lk.reserve(64);

  std::int32_t mindeg = 0;
  for (std::int32_t step = 0; step < n; ++step) {
    while (head[mindeg] == -1) ++mindeg;
    const std::int32_t k = head[mindeg];
    bucket_remove(k);
    perm[step] = k;
    eliminated[k] = 1;

    // L_k = A_k union element lists, minus k and eliminated variables.
    lk.clear();
    visit[k] = step;
    for (const std::int32_t j : adj[k]) {
      if (!eliminated[j] && visit[j] != step) {
        visit[j] = step;
        lk.push_back(j);
      }
    }
    for (const std::int32_t e : elems_of[k]) {
      if (!elem_alive[e]) continue;
      for (const std::int32_t j : elem[e]) {
        if (!eliminated[j] && visit[j] != step) {
          visit[j] = step;
          lk.push_back(j);
        }
      }
      elem_alive[e] = 0;  // merged into the new element k
      std::vector<std::int32_t>().swap(elem[e]);
    }
    std::vector<std::int32_t>().swap(adj[k]);
    std::vector<std::int32_t>().swap(elems_of[k]);

    if (lk.empty()) continue;  // isolated pivot leaves no element behind

    // Pass 1: ew[e] = |L_e \ L_k| for every live element touching L_k.
    for (const std::int32_t i : lk) {
      for (const std::int32_t e : elems_of[i]) {
        if (!elem_alive[e]) continue;
        if (eseen[e] != step) {
          eseen[e] = step;
          ew[e] = static_cast<std::int32_t>(elem[e].size());
        }
        --ew[e];
      }
    }
    // Aggressive absorption: elements fully inside L_k die.
    for (const std::int32_t i : lk) {
      for (const std::int32_t e : elems_of[i]) {
        if (elem_alive[e] && eseen[e] == step && ew[e] == 0) {
          elem_alive[e] = 0;
          std::vector<std::int32_t>().swap(elem[e]);
        }
      }
    }

    // Pass 2: prune lists, re-approximate degrees.
    const std::int32_t lk_size = static_cast<std::int32_t>(lk.size());
    const std::int32_t live_after = n - step - 1;
    for (const std::int32_t i : lk) {
      auto& ai = adj[i];
      std::size_t w = 0;
      for (const std::int32_t j : ai) {
        if (!eliminated[j] && visit[j] != step) ai[w++] = j;
      }
      ai.resize(w);

      auto& ei = elems_of[i];
      w = 0;
      std::int64_t esum = 0;
      for (const std::int32_t e : ei) {
        if (!elem_alive[e]) continue;
        ei[w++] = e;
        esum += ew[e];
      }
      ei.resize(w);
      ei.push_back(k);

      std::int64_t d = static_cast<std::int64_t>(ai.size()) + (lk_size - 1) + esum;
      d = std::min<std::int64_t>(d, live_after - 1);
      d = std::max<std::int64_t>(d, 0);

      bucket_remove(i);
      bucket_insert(i, static_cast<std::int32_t>(d));
      mindeg = std::min(mindeg, static_cast<std::int32_t>(d));
    }

    elem[k] = lk;
    elem_alive[k] = 1;
  }

  return perm;
}

namespace {

// Permuted upper-triangular pattern of P A P^T with a map back into the
// values of the lower-triangular input.
void build_permuted_upper(const SparsePattern& lower, std::span<const std::int32_t> perm_inv,
                          SymbolicChol& sym) {
  const std::int32_t n = lower.n;
  sym.u_col_ptr.assign(n + 1, 0);
  std::vector<std::int64_t> count(n, 0);
  for (std::int32_t j = 0; j < n; ++j) {
    for (std::int64_t p = lower.col_ptr[j]; p < lower.col_ptr[j + 1]; ++p) {
      const std::int32_t r = perm_inv[lower.row_ind[p]];
      const std::int32_t c = perm_inv[j];
      ++count[std::max(r, c)];
    }
  }
  for (std::int32_t j = 0; j < n; ++j) sym.u_col_ptr[j + 1] = sym.u_col_ptr[j] + count[j];
  const std::int64_t nnz = sym.u_col_ptr[n];
  sym.u_row_ind.resize(nnz);
  sym.u_source.resize(nnz);
  std::vector<std::int64_t> pos(sym.u_col_ptr.begin(), sym.u_col_ptr.end() - 1);
  for (std::int32_t j = 0; j < n; ++j) {
    for (std::int64_t p = lower.col_ptr[j]; p < lower.col_ptr[j + 1]; ++p) {
      const std::int32_t r = perm_inv[lower.row_ind[p]];
      const std::int32_t c = perm_inv[j];
      const std::int32_t col = std::max(r, c);
      const std::int64_t q = pos[col]++;
      sym.u_row_ind[q] = std::min(r, c);
      sym.u_source[q] = p;
    }
  }
}

void build_etree(SymbolicChol& sym) {
  const std::int32_t n = sym.n;
  sym.parent.assign(n, -1);
  std::vector<std::int32_t> ancestor(n, -1);
  for (std::int32_t k = 0; k < n; ++k) {
    for (std::int64_t p = sym.u_col_ptr[k]; p < sym.u_col_ptr[k + 1]; ++p) {
      std::int32_t i = sym.u_row_ind[p];
      while (i != -1 && i < k) {
        const std::int32_t next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) sym.parent[i] = k;
        i = next;
      }
    }
  }
}

// Column counts of L by walking each row's elimination-tree paths; O(nnz(L)).
void build_column_pointers(SymbolicChol& sym) {
  const std::int32_t n = sym.n;
  std::vector<std::int64_t> count(n, 1);  // diagonal
  std::vector<std::int32_t> visit(n, -1);
  for (std::int32_t k = 0; k < n; ++k) {
    visit[k] = k;
    for (std::int64_t p = sym.u_col_ptr[k]; p < sym.u_col_ptr[k + 1]; ++p) {
      std::int32_t i = sym.u_row_ind[p];
      while (i < k && visit[i] != k) {
        visit[i] = k;
        ++count[i];  // L(k, i) lands in column i
        i = sym.parent[i];
      }
    }
  }
  sym.l_col_ptr.assign(n + 1, 0);
  for (std::int32_t j = 0; j < n; ++j) sym.l_col_ptr[j + 1] = sym.l_col_ptr[j] + count[j];
}

}  // namespace

SymbolicChol analyze(const SparsePattern& lower, bool reorder) {
  SymbolicChol sym;
  sym.n = lower.n;
  if (reorder) {
    sym.perm = amd_order(lower);
  } else {
    sym.perm.resize(lower.n);
    std::iota(sym.perm.begin(), sym.perm.end(), 0);
  }
  sym.perm_inv.resize(lower.n);
  for (std::int32_t i = 0; i < lower.n; ++i) sym.perm_inv[sym.perm[i]] = i;
  build_permuted_upper(lower, sym.perm_inv, sym);
  build_etree(sym);
  build_column_pointers(sym);
  return sym;
}

CholFactor factorize_with(const SymbolicChol& symbolic, std::span<const double> values,
                          double max_diagonal) {
  const std::int32_t n = symbolic.n;
  if (values.size() != symbolic.u_source.size()) {
    throw std::invalid_argument("factorize: values do not match the symbolic structure");
  }

  CholFactor f;
  f.n_ = n;
  f.perm_ = symbolic.perm;
  f.perm_inv_ = symbolic.perm_inv;
  f.col_ptr_ = symbolic.l_col_ptr;
  f.row_ind_.resize(symbolic.l_nnz());
  f.values_.resize(symbolic.l_nnz());

  const double pivot_floor = 1e-14 * max_diagonal;

  std::vector<double> x(n, 0.0);
  std::vector<std::int32_t> visit(n, -1);
  std::vector<std::int32_t> path(n);
  std::vector<std::int32_t> pattern(n);
  std::vector<std::int64_t> write_head(symbolic.l_col_ptr.begin(), symbolic.l_col_ptr.end() - 1);

  double logdet = 0.0;
  for (std::int32_t k = 0; k < n; ++k) {
    // Scatter row k of the permuted lower triangle (= column k of the
    // permuted upper pattern) and collect its elimination-tree reach in
    // topological order.
    std::int32_t top = n;
    double d = 0.0;
    visit[k] = k;
    for (std::int64_t p = symbolic.u_col_ptr[k]; p < symbolic.u_col_ptr[k + 1]; ++p) {
      std::int32_t i = symbolic.u_row_ind[p];
      const double v = values[symbolic.u_source[p]];
      if (i == k) {
        d = v;
        continue;
      }
      x[i] = v;
      std::int32_t len = 0;
      while (visit[i] != k) {
        path[len++] = i;
        visit[i] = k;
        i = symbolic.parent[i];
      }
      while (len > 0) pattern[--top] = path[--len];
    }

    // Sparse triangular solve L(0:k-1, 0:k-1) x = A(0:k-1, k).
    for (std::int32_t t = top; t < n; ++t) {
      const std::int32_t i = pattern[t];
      const double lki = x[i] / f.values_[f.col_ptr_[i]];
      x[i] = 0.0;
      for (std::int64_t p = f.col_ptr_[i] + 1; p < write_head[i]; ++p) {
        x[f.row_ind_[p]] -= f.values_[p] * lki;
      }
      d -= lki * lki;
      f.row_ind_[write_head[i]] = k;
      f.values_[write_head[i]] = lki;
      ++write_head[i];
    }

    if (!(d > pivot_floor)) {
      throw NotPositiveDefiniteError(
          "factorize: nonpositive pivot at elimination step " + std::to_string(k) +
              " (original index " + std::to_string(symbolic.perm[k]) +
              "); matrix is numerically not positive-definite",
          k, symbolic.perm[k]);
    }
    f.row_ind_[write_head[k]] = k;
    f.values_[write_head[k]] = std::sqrt(d);
    ++write_head[k];
    logdet += std::log(d);
  }
  f.logdet_ = logdet;
  return f;
}

CholFactor factorize(const SparseSPD& matrix, const FactorizeOptions& options) {
  return factorize_with(analyze(matrix.pattern, options.reorder), matrix.values,
                        matrix.max_diagonal());
}

double logdet(const CholFactor& factor) { return factor.logdet(); }

void CholFactor::solve(std::span<const double> rhs, std::span<double> out) const {
  if (rhs.size() != static_cast<std::size_t>(n_) || out.size() != rhs.size()) {
    throw std::invalid_argument("solve: right-hand side length must equal n");
  }
  std::vector<double> y(n_);
  for (std::int32_t k = 0; k < n_; ++k) y[k] = rhs[perm_[k]];

  // L y' = y
  for (std::int32_t k = 0; k < n_; ++k) {
    const double yk = y[k] / values_[col_ptr_[k]];
    y[k] = yk;
    for (std::int64_t p = col_ptr_[k] + 1; p < col_ptr_[k + 1]; ++p) {
      y[row_ind_[p]] -= values_[p] * yk;
    }
  }
  // L^T z = y'
  for (std::int32_t k = n_ - 1; k >= 0; --k) {
    double s = y[k];
    for (std::int64_t p = col_ptr_[k] + 1; p < col_ptr_[k + 1]; ++p) {
      s -= values_[p] * y[row_ind_[p]];
    }
    y[k] = s / values_[col_ptr_[k]];
  }
  for (std::int32_t k = 0; k < n_; ++k) out[perm_[k]] = y[k];
}

std::vector<double> CholFactor::solve(std::span<const double> rhs) const {
  std::vector<double> out(rhs.size());
  solve(rhs, out);
  return out;
}

void CholFactor::apply_l(std::span<const double> x, std::span<double> y) const {
  if (x.size() != static_cast<std::size_t>(n_) || y.size() != x.size()) {
    throw std::invalid_argument("apply_l: vector length must equal n");
  }
  std::fill(y.begin(), y.end(), 0.0);
  for (std::int32_t k = 0; k < n_; ++k) {
    const double xk = x[k];
    for (std::int64_t p = col_ptr_[k]; p < col_ptr_[k + 1]; ++p) {
      y[row_ind_[p]] += values_[p] * xk;
    }
  }
}

void fill_values(const SparsePattern& pattern, std::span<const double> dist,
                 const CovarianceModel& model, std::vector<double>& values, int n_threads) {
  const std::int32_t n = pattern.n;
  values.resize(pattern.nnz());
  const double diag = model.params.sill + model.params.nugget;
  parallel_for(n, n_threads, [&](std::size_t j) {
    const std::int64_t begin = pattern.col_ptr[j];
    const std::int64_t end = pattern.col_ptr[j + 1];
    values[begin] = diag;
    for (std::int64_t p = begin + 1; p < end; ++p) {
      values[p] = model.value(dist[p]);
    }
  });
}

SparseSPD assemble(const Dataset& dataset, const CovarianceModel& model,
                   std::optional<double> truncation, int n_threads) {
  model.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw IngestError("assemble: empty dataset");
  if (dataset.values.size() != n) throw IngestError("assemble: location/value length mismatch");

  double radius = model.support_radius();
  if (!std::isfinite(radius) && truncation) {
    if (!(*truncation > 0.0)) throw std::domain_error("assemble: truncation radius must be positive");
    radius = *truncation;
  }

  PatternDistances pd;
  if (std::isfinite(radius)) {
    SpatialIndex index(dataset.locations);
    pd = pattern_with_distances(index, dataset.locations, radius, n_threads);
  } else {
    if (n > static_cast<std::size_t>(kDenseFallbackLimit)) {
      throw SizeError("assemble: a plain Matern model with n = " + std::to_string(n) +
                      " needs an explicit truncation radius (dense fallback allows n <= " +
                      std::to_string(kDenseFallbackLimit) + ")");
    }
    pd = dense_pattern_with_distances(dataset.locations);
  }

  SparseSPD out;
  out.pattern = std::move(pd.pattern);
  fill_values(out.pattern, pd.dist, model, out.values, n_threads);
  return out;
}

void write_matrix_market(std::ostream& out, const SparseSPD& matrix) {
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << matrix.n() << " " << matrix.n() << " " << matrix.nnz_lower() << "\n";
  const auto old_precision = out.precision(17);
  for (std::int32_t j = 0; j < matrix.n(); ++j) {
    for (std::int64_t p = matrix.pattern.col_ptr[j]; p < matrix.pattern.col_ptr[j + 1]; ++p) {
      out << (matrix.pattern.row_ind[p] + 1) << " " << (j + 1) << " " << matrix.values[p] << "\n";
    }
  }
  out.precision(old_precision);
}

}  // namespace taperkrig
