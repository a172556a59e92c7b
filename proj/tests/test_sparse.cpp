#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "taperkrig/dense.hpp"
#include "taperkrig/errors.hpp"
#include "taperkrig/rng.hpp"
#include "taperkrig/sparse.hpp"

using namespace taperkrig;

namespace {

Dataset random_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Location> locs(n);
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    locs[i] = Location{rng.uniform(), rng.uniform()};
    vals[i] = rng.normal();
  }
  return make_dataset(std::move(locs), std::move(vals));
}

CovarianceModel tapered_model(double sill, double range, double nu, double nugget, double theta) {
  CovarianceModel m;
  m.kind = ModelKind::TaperedMatern;
  m.params = CovarianceParams{sill, range, nu, nugget};
  m.taper = TaperSpec{select_taper(nu), theta};
  return m;
}

Eigen::MatrixXd to_dense(const SparseSPD& a) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.n(), a.n());
  for (std::int32_t j = 0; j < a.n(); ++j) {
    for (std::int64_t p = a.pattern.col_ptr[j]; p < a.pattern.col_ptr[j + 1]; ++p) {
      out(a.pattern.row_ind[p], j) = a.values[p];
      out(j, a.pattern.row_ind[p]) = a.values[p];
    }
  }
  return out;
}

Eigen::MatrixXd factor_to_dense(const CholFactor& f) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(f.n(), f.n());
  const auto cp = f.col_ptr();
  const auto ri = f.row_ind();
  const auto vx = f.values();
  for (std::int32_t j = 0; j < f.n(); ++j) {
    for (std::int64_t p = cp[j]; p < cp[j + 1]; ++p) l(ri[p], j) = vx[p];
  }
  return l;
}

SparseSPD from_dense_lower(const Eigen::MatrixXd& a) {
  SparseSPD out;
  const std::int32_t n = static_cast<std::int32_t>(a.rows());
  out.pattern.n = n;
  out.pattern.col_ptr.assign(n + 1, 0);
  for (std::int32_t j = 0; j < n; ++j) {
    for (std::int32_t i = j; i < n; ++i) {
      if (i == j || a(i, j) != 0.0) {
        out.pattern.row_ind.push_back(i);
        out.values.push_back(a(i, j));
      }
    }
    out.pattern.col_ptr[j + 1] = static_cast<std::int64_t>(out.pattern.row_ind.size());
  }
  return out;
}

}  // namespace

TEST_CASE("assemble basics") {
  SUBCASE("singleton") {
    const Dataset d = make_dataset({{0.5, 0.5}}, {1.0});
    const SparseSPD a = assemble(d, tapered_model(2.0, 0.1, 0.5, 0.5, 0.3));
    CHECK(a.n() == 1);
    CHECK(a.nnz_lower() == 1);
    CHECK(a.values[0] == doctest::Approx(2.5).epsilon(1e-15));
  }
  SUBCASE("three collinear points at half-support spacing") {
    const double theta = 0.2;
    const Dataset d =
        make_dataset({{0.0, 0.0}, {theta / 2, 0.0}, {theta, 0.0}}, {0.0, 0.0, 0.0});
    const SparseSPD a = assemble(d, tapered_model(1.0, 0.05, 0.5, 0.0, theta));
    // Two off-diagonal pairs inside the support; the pair at exactly theta
    // is structurally excluded.
    CHECK(a.nnz_lower() == 5);
  }
  SUBCASE("matches a masked dense evaluation exactly") {
    const Dataset d = random_dataset(300, 17);
    const auto m = tapered_model(1.4, 0.07, 0.6, 0.2, 0.2);
    const SparseSPD a = assemble(d, m);
    a.pattern.validate();
    const Eigen::MatrixXd k = dense_covariance(d.locations, m);
    for (std::int32_t j = 0; j < a.n(); ++j) {
      for (std::int64_t p = a.pattern.col_ptr[j]; p < a.pattern.col_ptr[j + 1]; ++p) {
        CHECK(a.values[p] == k(a.pattern.row_ind[p], j));
      }
    }
    // Entries absent from the pattern are exactly zero in the dense matrix.
    Eigen::MatrixXd back = to_dense(a);
    CHECK((back - k).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("plain Matern needs a truncation radius or small n") {
    const Dataset small = random_dataset(50, 3);
    CovarianceModel m;
    m.kind = ModelKind::Matern;
    m.params = CovarianceParams{1.0, 0.1, 0.5, 0.1};
    const SparseSPD dense_path = assemble(small, m);
    CHECK(dense_path.nnz_lower() == 50 * 51 / 2);
    const SparseSPD truncated = assemble(small, m, 0.2);
    CHECK(truncated.nnz_lower() < dense_path.nnz_lower());
  }
}

TEST_CASE("factorize basics") {
  SUBCASE("identity") {
    const SparseSPD eye = from_dense_lower(Eigen::MatrixXd::Identity(5, 5));
    const CholFactor f = factorize(eye);
    CHECK(f.logdet() == 0.0);
    CHECK(logdet(f) == 0.0);
    const std::vector<double> rhs{1, 2, 3, 4, 5};
    const auto x = f.solve(rhs);
    for (int i = 0; i < 5; ++i) CHECK(x[i] == rhs[i]);
  }
  SUBCASE("2x2 hand determinant") {
    Eigen::MatrixXd a(2, 2);
    a << 2, 1, 1, 2;
    const CholFactor f = factorize(from_dense_lower(a));
    CHECK(f.logdet() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("diagonal log-determinant") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
    a.diagonal() << 1.0, 2.0, 4.0, 0.5;
    const CholFactor f = factorize(from_dense_lower(a));
    CHECK(f.logdet() == doctest::Approx(std::log(1.0 * 2.0 * 4.0 * 0.5)).epsilon(1e-14));
  }
  SUBCASE("indefinite matrix reports its pivot") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 2, 2, 1;
    try {
      factorize(from_dense_lower(a));
      FAIL("expected NotPositiveDefiniteError");
    } catch (const NotPositiveDefiniteError& e) {
      CHECK(e.pivot() >= 0);
      CHECK(e.original_index() >= 0);
    }
  }
}

TEST_CASE("factorization reconstructs the permuted matrix") {
  const Dataset d = random_dataset(500, 23);
  const auto m = tapered_model(1.0, 0.05, 1.0, 0.05, 0.15);
  const SparseSPD a = assemble(d, m);
  const CholFactor f = factorize(a);

  const Eigen::MatrixXd k = to_dense(a);
  const Eigen::MatrixXd l = factor_to_dense(f);
  const auto& perm = f.perm();
  Eigen::MatrixXd pkp(a.n(), a.n());
  for (std::int32_t r = 0; r < a.n(); ++r) {
    for (std::int32_t c = 0; c < a.n(); ++c) pkp(r, c) = k(perm[r], perm[c]);
  }
  const double err = (pkp - l * l.transpose()).cwiseAbs().maxCoeff();
  CHECK(err <= 1e-10 * k.cwiseAbs().maxCoeff());
}

TEST_CASE("solve and logdet match the dense reference") {
  const Dataset d = random_dataset(300, 29);
  const auto m = tapered_model(2.0, 0.06, 0.5, 0.3, 0.25);
  const SparseSPD a = assemble(d, m);
  const CholFactor f = factorize(a);
  const DenseChol ref(dense_covariance(d.locations, m));

  CHECK(f.logdet() == doctest::Approx(ref.logdet()).epsilon(1e-10));

  Rng rng(5);
  std::vector<double> rhs(300);
  for (auto& v : rhs) v = rng.normal();
  const auto x = f.solve(rhs);
  const Eigen::VectorXd xd = ref.solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), 300));
  double scale = xd.cwiseAbs().maxCoeff();
  for (int i = 0; i < 300; ++i) {
    CHECK(std::fabs(x[i] - xd[i]) <= 1e-8 * scale);
  }

  SUBCASE("constructed solution") {
    const Eigen::MatrixXd k = to_dense(a);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(300);
    const Eigen::VectorXd b = k * ones;
    const auto sol = f.solve(std::span<const double>(b.data(), 300));
    for (int i = 0; i < 300; ++i) CHECK(sol[i] == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("length mismatch is rejected") {
    std::vector<double> bad(299);
    CHECK_THROWS_AS(f.solve(bad), std::invalid_argument);
  }
}

TEST_CASE("random tapered assemblies are positive-definite") {
  Rng rng(61);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 40 + rng.index(160);
    const Dataset d = random_dataset(n, 7000 + rep);
    const double nu = 0.1 + rng.uniform() * 2.4;
    const double sill = 0.3 + rng.uniform() * 2.0;
    const double range = 0.02 + rng.uniform() * 0.2;
    const double nugget = rng.uniform() < 0.3 ? 0.0 : rng.uniform() * 0.5;
    const double theta = 0.05 + rng.uniform() * 0.4;
    const SparseSPD a = assemble(d, tapered_model(sill, range, nu, nugget, theta));
    CHECK_NOTHROW(factorize(a));
  }
}

TEST_CASE("logdet is invariant under dataset permutation") {
  const Dataset d = random_dataset(150, 31);
  const auto m = tapered_model(1.0, 0.08, 0.6, 0.1, 0.3);
  const double base = factorize(assemble(d, m)).logdet();

  std::vector<std::int32_t> order(150);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(77);
  for (std::size_t t = 149; t > 0; --t) {
    std::swap(order[t], order[rng.index(t + 1)]);
  }
  const Dataset shuffled = d.subset(order);
  const double permuted = factorize(assemble(shuffled, m)).logdet();
  CHECK(permuted == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("ordering") {
  const Dataset d = random_dataset(400, 37);
  const auto m = tapered_model(1.0, 0.05, 0.5, 0.1, 0.15);
  const SparseSPD a = assemble(d, m);

  SUBCASE("amd output is a permutation") {
    const auto perm = amd_order(a.pattern);
    std::vector<char> seen(400, 0);
    for (const auto p : perm) {
      CHECK(!seen[p]);
      seen[p] = 1;
    }
  }
  SUBCASE("fill never shrinks below the input and amd beats natural order") {
    const SymbolicChol with_amd = analyze(a.pattern, true);
    const SymbolicChol natural = analyze(a.pattern, false);
    CHECK(with_amd.l_nnz() >= a.nnz_lower());
    CHECK(natural.l_nnz() >= a.nnz_lower());
    CHECK(with_amd.l_nnz() <= natural.l_nnz());
  }
  SUBCASE("reordering disabled keeps the natural order") {
    const SymbolicChol natural = analyze(a.pattern, false);
    for (std::int32_t i = 0; i < 400; ++i) CHECK(natural.perm[i] == i);
    const CholFactor f = factorize(a, FactorizeOptions{false});
    CHECK(f.logdet() == doctest::Approx(factorize(a).logdet()).epsilon(1e-10));
  }
}

TEST_CASE("density") {
  const Dataset d = random_dataset(64, 41);
  CovarianceModel m;
  m.kind = ModelKind::Matern;
  m.params = CovarianceParams{1.0, 0.1, 0.5, 0.0};

  const SparseSPD diag_only = assemble(d, m, 1e-12);
  CHECK(density(diag_only) == doctest::Approx(1.0 / 64).epsilon(1e-12));

  const SparseSPD full = assemble(d, m);  // dense fallback
  CHECK(density(full) == doctest::Approx(1.0).epsilon(1e-12));

  const auto tm = tapered_model(1.0, 0.05, 0.5, 0.0, 0.1);
  auto tm2 = tm;
  tm2.taper->range = 0.2;
  CHECK(density(assemble(d, tm2)) > density(assemble(d, tm)));
}

TEST_CASE("matrix market dump") {
  Eigen::MatrixXd a(2, 2);
  a << 2, 0.5, 0.5, 1;
  std::ostringstream out;
  write_matrix_market(out, from_dense_lower(a));
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real symmetric");
  int rows, cols;
  std::int64_t nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == 2);
  CHECK(nnz == 3);
  int r, c;
  double v;
  in >> r >> c >> v;
  CHECK(r == 1);  // 1-based
  CHECK(c == 1);
  CHECK(v == 2.0);
}
