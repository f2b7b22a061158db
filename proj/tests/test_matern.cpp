#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <pmfield/errors.hpp>
#include <pmfield/matern.hpp>
#include <pmfield/mesh.hpp>

#include "oracles.hpp"

using namespace pmfield;

TEST_CASE("matern covariance closed forms and oracle values") {
  SUBCASE("variance at zero lag") {
    CHECK(matern_cov(0.0, {1.0, 2.0, 1.0}) == doctest::Approx(1.0));
    CHECK(matern_cov(0.0, {3.5, 0.4, 0.5}) == doctest::Approx(3.5));
  }
  SUBCASE("nu = 1/2 is the exponential") {
    CHECK(matern_cov(1.0, {1.0, 1.0, 0.5}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(matern_cov(2.5, {1.0, 1.3, 0.5}) ==
          doctest::Approx(std::exp(-1.3 * 2.5)).epsilon(1e-12));
  }
  SUBCASE("nu = 1 against the frozen Bessel value") {
    // x K_1(x) at x = 1: K_1(1) = 0.6019072301972346 (quadrature oracle)
    CHECK(matern_cov(1.0, {1.0, 1.0, 1.0}) == doctest::Approx(0.6019072301972346).epsilon(1e-10));
  }
  SUBCASE("implementation matches the quadrature oracle across scales") {
    for (double nu : {0.5, 1.0, 1.7, 2.5}) {
      for (double x : {0.01, 0.1, 0.5, 1.0, 3.0, 10.0, 25.0}) {
        double kx = std::cyl_bessel_k(nu, x);
        double oracle = oracles::bessel_k_quadrature(nu, x);
        CHECK(kx == doctest::Approx(oracle).epsilon(1e-9));
      }
    }
  }
  SUBCASE("monotone decreasing, in (0, 1] after normalization") {
    MaternParams p{2.0, 0.7, 1.0};
    double prev = matern_cov(0.0, p);
    CHECK(prev == doctest::Approx(2.0));
    for (double d = 0.05; d < 20.0; d += 0.05) {
      double value = matern_cov(d, p);
      CHECK(value < prev);
      CHECK(value > 0.0);
      prev = value;
    }
  }
  SUBCASE("correlation at the nominal range is near 0.1") {
    for (double kappa : {0.3, 1.0, 4.0}) {
      MaternParams p{1.0, kappa, 1.0};
      double rho = std::sqrt(8.0) / kappa;
      double corr = matern_cov(rho, p);
      CHECK(corr > 0.10);
      CHECK(corr < 0.17);
    }
  }
}

TEST_CASE("spde parameter conversions round-trip") {
  SpdeParams p = SpdeParams::from_range_sigma(12.0, 2.0);
  CHECK(p.range() == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(p.sigma2() == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("spde precision on a single unit right triangle matches hand arithmetic") {
  Mesh mesh;
  mesh.nodes = {{0, 0}, {1, 0}, {0, 1}};
  mesh.triangles = {{0, 1, 2}};
  FemMatrices fem = assemble_fem(mesh);

  // Hand-computed from the FEM example matrices with kappa = tau = 1:
  // Q = C + 2 G + G C^{-1} G with C = diag(1/6) and the G of the FEM test.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 3);
  c.diagonal().setConstant(1.0 / 6);
  Eigen::MatrixXd g(3, 3);
  g << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  Eigen::MatrixXd expected = c + 2.0 * g + g * c.inverse() * g;

  SpMat q = spde_precision(fem, {1.0, 1.0});
  CHECK((Eigen::MatrixXd(q) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spde precision scales as tau^2 and keeps its pattern") {
  Mesh mesh = regular_mesh(0.0, 4.0, 0.0, 4.0, 6, 6);
  FemMatrices fem = assemble_fem(mesh);
  SpMat q1 = spde_precision(fem, {1.3, 0.7});
  SpMat q2 = spde_precision(fem, {1.3, 1.4});
  CHECK((Eigen::MatrixXd(q2) - 4.0 * Eigen::MatrixXd(q1)).cwiseAbs().maxCoeff() < 1e-10);

  SpMat q3 = spde_precision(fem, {0.2, 2.0});
  CHECK(q1.nonZeros() == q3.nonZeros());

  // pattern equals that of G C^{-1} G
  Eigen::VectorXd inv_mass = fem.mass_lumped.cwiseInverse();
  SpMat gcg = fem.stiffness * inv_mass.asDiagonal() * fem.stiffness;
  CHECK(q1.nonZeros() == gcg.nonZeros());
}

TEST_CASE("spde precision approximates the matern covariance on a fine mesh") {
  // [0,10]^2, kappa = 2 (range ~1.41), tau set for unit variance, <= 900 nodes
  const int n = 30;
  Mesh mesh = regular_mesh(0.0, 10.0, 0.0, 10.0, n, n);
  FemMatrices fem = assemble_fem(mesh);
  double kappa = 2.0;
  double tau = 1.0 / (2.0 * std::sqrt(M_PI) * kappa);  // sigma2 = 1
  SpMat q = spde_precision(fem, {kappa, tau});

  Eigen::MatrixXd dense = Eigen::MatrixXd(q);
  Eigen::MatrixXd cov = dense.llt().solve(Eigen::MatrixXd::Identity(dense.rows(), dense.cols()));

  double rho = std::sqrt(8.0) / kappa;
  MaternParams analytic{1.0, kappa, 1.0};

  // interior nodes at least ~2 rho from the boundary
  std::vector<int> interior;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const auto& p = mesh.nodes[i];
    double margin = std::min({p.x(), 10.0 - p.x(), p.y(), 10.0 - p.y()});
    if (margin >= 2.0 * rho) interior.push_back(i);
  }
  REQUIRE(interior.size() > 50);

  double worst = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < interior.size(); a += 3) {
    for (std::size_t b = a; b < interior.size(); b += 3) {
      int i = interior[a], j = interior[b];
      double d = (mesh.nodes[i] - mesh.nodes[j]).norm();
      if (d > 2.0 * rho) continue;
      double corr = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
      worst = std::max(worst, std::abs(corr - matern_cov(d, analytic)));
      ++pairs;
    }
  }
  CHECK(pairs > 100);
  CHECK(worst < 0.05);
}

TEST_CASE("boundary variance inflation and interior accuracy") {
  const int n = 30;
  Mesh mesh = regular_mesh(0.0, 10.0, 0.0, 10.0, n, n);
  FemMatrices fem = assemble_fem(mesh);
  double kappa = 2.0;
  double tau = 1.0 / (2.0 * std::sqrt(M_PI) * kappa);
  SpMat q = spde_precision(fem, {kappa, tau});
  Eigen::MatrixXd cov =
      Eigen::MatrixXd(q).llt().solve(Eigen::MatrixXd::Identity(q.rows(), q.cols()));

  double rho = std::sqrt(8.0) / kappa;
  double interior_max = 0.0, boundary_min = 1e300;
  for (int i = 0; i < mesh.node_count(); ++i) {
    const auto& p = mesh.nodes[i];
    double margin = std::min({p.x(), 10.0 - p.x(), p.y(), 10.0 - p.y()});
    if (margin == 0.0) boundary_min = std::min(boundary_min, cov(i, i));
    if (margin >= rho) {
      interior_max = std::max(interior_max, cov(i, i));
      CHECK(cov(i, i) == doctest::Approx(1.0).epsilon(0.15));
    }
  }
  CHECK(boundary_min > interior_max);
}

TEST_CASE("sample_field determinism and identity-precision passthrough") {
  SpMat identity(3, 3);
  identity.setIdentity();

  Eigen::VectorXd draw = sample_field(identity, 42);
  // identity precision + natural ordering: the raw standard normals
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(draw[i] == doctest::Approx(normal(rng)).epsilon(1e-15));

  Eigen::VectorXd again = sample_field(identity, 42);
  CHECK((draw - again).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd other = sample_field(identity, 43);
  CHECK((draw - other).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sample_field marginal variance matches the closed form") {
  Mesh mesh = regular_mesh(0.0, 8.0, 0.0, 8.0, 12, 12);
  FemMatrices fem = assemble_fem(mesh);
  double kappa = 1.0;
  double tau = 1.0 / (2.0 * std::sqrt(M_PI) * kappa);  // sigma2 = 1
  SpMat q = spde_precision(fem, {kappa, tau});

  // central node, 2000 draws
  int center = -1;
  for (int i = 0; i < mesh.node_count(); ++i)
    if ((mesh.nodes[i] - Eigen::Vector2d(4.0, 4.0)).norm() < 1e-9) center = i;
  REQUIRE(center >= 0);

  double sum = 0.0, sum2 = 0.0;
  const int n_draws = 2000;
  for (int r = 0; r < n_draws; ++r) {
    double v = sample_field(q, 1000 + r)[center];
    sum += v;
    sum2 += v * v;
  }
  double variance = sum2 / n_draws - (sum / n_draws) * (sum / n_draws);
  // interior marginal variance of the discrete field; 10% Monte Carlo band
  CHECK(variance == doctest::Approx(1.0).epsilon(0.10));
}
