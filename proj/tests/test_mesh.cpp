#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <pmfield/errors.hpp>
#include <pmfield/mesh.hpp>

#include "oracles.hpp"

using namespace pmfield;

namespace {
const double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::Vector2d> unit_square() {
  return {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
}
}  // namespace

TEST_CASE("three stations give a single triangle") {
  std::vector<Eigen::Vector2d> pts = {{0, 0}, {1, 0}, {0, 1}};
  Mesh mesh = build_mesh(pts, 0.0, kInf);
  CHECK(mesh.node_count() == 3);
  CHECK(mesh.triangles.size() == 1);
  CHECK(mesh.boundary_nodes.size() == 3);
}

TEST_CASE("unit square is triangulated into two Delaunay triangles") {
  Mesh mesh = build_mesh(unit_square(), 0.0, kInf);
  REQUIRE(mesh.node_count() == 4);
  REQUIRE(mesh.triangles.size() == 2);
  // brute-force circumcircle audit: no node strictly inside any circumcircle
  for (const auto& tr : mesh.triangles)
    for (int node = 0; node < mesh.node_count(); ++node) {
      if (node == tr[0] || node == tr[1] || node == tr[2]) continue;
      CHECK_FALSE(oracles::circumcircle_contains(mesh.nodes[tr[0]], mesh.nodes[tr[1]],
                                                 mesh.nodes[tr[2]], mesh.nodes[node]));
    }
}

TEST_CASE("random clouds triangulate to valid Delaunay meshes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 60; ++i) pts.emplace_back(u(rng), u(rng));
  Mesh mesh = build_mesh(pts, 0.0, kInf);
  CHECK(mesh.node_count() == 60);
  // conforming + empty circumcircle (with tolerance)
  for (const auto& tr : mesh.triangles)
    for (int node = 0; node < mesh.node_count(); ++node) {
      if (node == tr[0] || node == tr[1] || node == tr[2]) continue;
      CHECK_FALSE(oracles::circumcircle_contains(mesh.nodes[tr[0]], mesh.nodes[tr[1]],
                                                 mesh.nodes[tr[2]], mesh.nodes[node], 1e-7));
    }
}

TEST_CASE("collinear points are rejected") {
  std::vector<Eigen::Vector2d> pts = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(build_mesh(pts, 0.0, kInf), DegenerateGeometry);
}

TEST_CASE("buffer ring puts every station strictly inside the mesh hull") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 25; ++i) pts.emplace_back(u(rng), u(rng));
  Mesh mesh = build_mesh(pts, 0.2, kInf);
  CHECK(mesh.node_count() > 25);
  // all stations project strictly inside (not boundary nodes)
  Projector proj = project(mesh, pts);
  SpMat at = proj.a.transpose();
  std::set<int> boundary(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end());
  for (int i = 0; i < 25; ++i) {
    bool on_boundary_node = false;
    for (SpMat::InnerIterator it(at, i); it; ++it)
      if (it.value() > 1.0 - 1e-12 && boundary.count(static_cast<int>(it.row())))
        on_boundary_node = true;
    CHECK_FALSE(on_boundary_node);
  }
}

TEST_CASE("refinement caps edge lengths and is monotone in max_edge") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 15; ++i) pts.emplace_back(u(rng), u(rng));

  Mesh coarse = build_mesh(pts, 0.1, 4.0);
  Mesh fine = build_mesh(pts, 0.1, 2.0);
  CHECK(coarse.max_edge_length() <= 4.0 + 1e-12);
  CHECK(fine.max_edge_length() <= 2.0 + 1e-12);
  CHECK(fine.node_count() >= coarse.node_count());

  // conformity after refinement: every shared edge appears in at most 2 triangles
  std::map<std::pair<int, int>, int> edges;
  for (const auto& tr : fine.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = tr[e], b = tr[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  for (const auto& [edge, count] : edges) CHECK(count <= 2);
}

TEST_CASE("fem matrices on the unit right triangle match hand values") {
  Mesh mesh;
  mesh.nodes = {{0, 0}, {1, 0}, {0, 1}};
  mesh.triangles = {{0, 1, 2}};
  FemMatrices fem = assemble_fem(mesh);

  CHECK(fem.mass_lumped[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(fem.mass_lumped[1] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(fem.mass_lumped[2] == doctest::Approx(1.0 / 6).epsilon(1e-12));

  Eigen::MatrixXd g = Eigen::MatrixXd(fem.stiffness);
  Eigen::MatrixXd expected(3, 3);
  expected << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  CHECK((g - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fem invariants on an irregular mesh") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < 30; ++i) pts.emplace_back(u(rng), u(rng));
  Mesh mesh = build_mesh(pts, 0.15, 2.0);
  FemMatrices fem = assemble_fem(mesh);

  // G 1 = 0 (constants have zero gradient)
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.node_count());
  CHECK((fem.stiffness * ones).cwiseAbs().maxCoeff() < 1e-10);
  // sum of lumped masses = total area
  CHECK(fem.mass_lumped.sum() == doctest::Approx(mesh.total_area()).epsilon(1e-10));
  // symmetry
  SpMat diff = SpMat(fem.stiffness.transpose()) - fem.stiffness;
  CHECK(Eigen::MatrixXd(diff).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("discrete Laplacian consistency on a fine regular mesh") {
  Mesh mesh = regular_mesh(0.0, 1.0, 0.0, 1.0, 21, 21);
  FemMatrices fem = assemble_fem(mesh);
  Eigen::VectorXd f(mesh.node_count());
  for (int i = 0; i < mesh.node_count(); ++i) f[i] = mesh.nodes[i].x() * mesh.nodes[i].x();
  Eigen::VectorXd gf = fem.stiffness * f;
  // interior nodes: (G f)_i ~ -Laplacian(f) * C_ii = -2 C_ii
  std::set<int> boundary(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end());
  int checked = 0;
  for (int i = 0; i < mesh.node_count(); ++i) {
    if (boundary.count(i)) continue;
    CHECK(gf[i] == doctest::Approx(-2.0 * fem.mass_lumped[i]).epsilon(0.05));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("projector barycentric weights") {
  Mesh mesh = build_mesh(unit_square(), 0.0, kInf);

  SUBCASE("a mesh node maps to weight one") {
    Projector proj = project(mesh, {{0.0, 0.0}});
    Eigen::MatrixXd a = Eigen::MatrixXd(proj.a);
    CHECK(a.row(0).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("a triangle centroid maps to weights 1/3") {
    const auto& tr = mesh.triangles[0];
    Eigen::Vector2d centroid =
        (mesh.nodes[tr[0]] + mesh.nodes[tr[1]] + mesh.nodes[tr[2]]) / 3.0;
    Projector proj = project(mesh, {centroid});
    SpMat at = proj.a.transpose();
    for (SpMat::InnerIterator it(at, 0); it; ++it)
      CHECK(it.value() == doctest::Approx(1.0 / 3).epsilon(1e-10));
  }
  SUBCASE("outside point raises with its index") {
    try {
      project(mesh, {{0.5, 0.5}, {10.0, 10.0}});
      FAIL("expected PointOutsideMesh");
    } catch (const PointOutsideMesh& e) {
      CHECK(e.point_index == 1);
    }
  }
  SUBCASE("affine functions are interpolated exactly") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i < 50; ++i) pts.emplace_back(u(rng), u(rng));
    Projector proj = project(mesh, pts);
    auto affine = [](const Eigen::Vector2d& p) { return 3.0 + 2.0 * p.x() - 5.0 * p.y(); };
    Eigen::VectorXd node_values(mesh.node_count());
    for (int i = 0; i < mesh.node_count(); ++i) node_values[i] = affine(mesh.nodes[i]);
    Eigen::VectorXd interp = proj.a * node_values;
    for (std::size_t i = 0; i < pts.size(); ++i)
      CHECK(interp[static_cast<int>(i)] == doctest::Approx(affine(pts[i])).epsilon(1e-10));
  }
}

TEST_CASE("mesh csv export") {
  Mesh mesh = build_mesh(unit_square(), 0.0, kInf);
  write_mesh_csv(mesh, "mesh_nodes_test.csv", "mesh_tris_test.csv");
  std::ifstream nodes("mesh_nodes_test.csv");
  std::string line;
  std::getline(nodes, line);
  CHECK(line == "node,x_km,y_km,boundary");
  int count = 0;
  while (std::getline(nodes, line)) ++count;
  CHECK(count == 4);
  std::remove("mesh_nodes_test.csv");
  std::remove("mesh_tris_test.csv");
}
