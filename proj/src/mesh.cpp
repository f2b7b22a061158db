#include "pmfield/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "pmfield/errors.hpp"

namespace pmfield {

namespace {

using Vec2 = Eigen::Vector2d;

double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

double tri_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * std::abs(orient2d(a, b, c));
}

// Strict circumcircle containment for a CCW triangle (a, b, c). Translated to
// p so the determinant stays well scaled even with far-away super vertices.
bool in_circumcircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& p) {
  long double ax = a.x() - p.x(), ay = a.y() - p.y();
  long double bx = b.x() - p.x(), by = b.y() - p.y();
  long double cx = c.x() - p.x(), cy = c.y() - p.y();
  long double a2 = ax * ax + ay * ay;
  long double b2 = bx * bx + by * by;
  long double c2 = cx * cx + cy * cy;
  long double det = ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx);
  long double m = std::max({std::abs(ax), std::abs(ay), std::abs(bx), std::abs(by),
                            std::abs(cx), std::abs(cy)});
  long double threshold = 1e-12L * m * m * m * m;
  return det > threshold;
}

struct Edge {
  int a, b;  // a < b
  Edge(int i, int j) : a(std::min(i, j)), b(std::max(i, j)) {}
  bool operator<(const Edge& o) const { return a != o.a ? a < o.a : b < o.b; }
  bool operator==(const Edge& o) const { return a == o.a && b == o.b; }
};

std::vector<std::array<int, 3>> bowyer_watson(std::vector<Vec2>& pts) {
  const int n = static_cast<int>(pts.size());
  Vec2 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec2 center = 0.5 * (lo + hi);
  double extent = std::max({(hi - lo).x(), (hi - lo).y(), 1e-6});
  double r = 1e3 * extent;

  // Super-triangle vertices appended after the real points.
  int s0 = n, s1 = n + 1, s2 = n + 2;
  pts.push_back(center + Vec2(0, 2 * r));
  pts.push_back(center + Vec2(-1.7320508 * r, -r));
  pts.push_back(center + Vec2(1.7320508 * r, -r));

  std::vector<std::array<int, 3>> tris;
  tris.push_back({s0, s1, s2});

  for (int ip = 0; ip < n; ++ip) {
    const Vec2& p = pts[ip];
    std::vector<int> bad;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      const auto& tr = tris[t];
      if (in_circumcircle(pts[tr[0]], pts[tr[1]], pts[tr[2]], p)) bad.push_back(t);
    }
    // Cavity boundary: edges of bad triangles that appear exactly once.
    std::map<Edge, std::pair<int, std::pair<int, int>>> edge_count;
    for (int t : bad) {
      const auto& tr = tris[t];
      for (int e = 0; e < 3; ++e) {
        int i = tr[e], j = tr[(e + 1) % 3];
        auto [it, inserted] = edge_count.emplace(Edge(i, j), std::make_pair(1, std::make_pair(i, j)));
        if (!inserted) ++it->second.first;
      }
    }
    std::set<int> bad_set(bad.begin(), bad.end());
    std::vector<std::array<int, 3>> kept;
    kept.reserve(tris.size());
    for (int t = 0; t < static_cast<int>(tris.size()); ++t)
      if (!bad_set.count(t)) kept.push_back(tris[t]);
    tris.swap(kept);
    for (const auto& [edge, info] : edge_count) {
      if (info.first != 1) continue;
      auto [i, j] = info.second;  // oriented as in the removed triangle
      if (orient2d(pts[i], pts[j], p) > 0)
        tris.push_back({i, j, ip});
      else
        tris.push_back({j, i, ip});
    }
  }

  std::vector<std::array<int, 3>> out;
  for (const auto& tr : tris)
    if (tr[0] < n && tr[1] < n && tr[2] < n) out.push_back(tr);
  pts.resize(n);
  return out;
}

void refine_longest_edge(std::vector<Vec2>& nodes, std::vector<std::array<int, 3>>& tris,
                         double max_edge) {
  if (!std::isfinite(max_edge)) return;
  const int max_splits = 200000;
  for (int split = 0; split < max_splits; ++split) {
    // Globally longest edge above threshold; ties resolved by node indices.
    double best_len = max_edge;
    int bi = -1, bj = -1;
    for (const auto& tr : tris) {
      for (int e = 0; e < 3; ++e) {
        int i = tr[e], j = tr[(e + 1) % 3];
        if (i > j) std::swap(i, j);
        double len = (nodes[i] - nodes[j]).norm();
        if (len > best_len + 1e-15 ||
            (std::abs(len - best_len) <= 1e-15 && bi >= 0 &&
             (i < bi || (i == bi && j < bj)))) {
          best_len = len;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0) return;

    int mid = static_cast<int>(nodes.size());
    nodes.push_back(0.5 * (nodes[bi] + nodes[bj]));

    // Bisect every triangle sharing the edge; the shared edge is subdivided
    // consistently on both sides, so the mesh stays conforming.
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() + 2);
    for (const auto& tr : tris) {
      int k = -1;
      for (int e = 0; e < 3; ++e) {
        int i = tr[e], j = tr[(e + 1) % 3];
        if ((i == bi && j == bj) || (i == bj && j == bi)) k = tr[(e + 2) % 3];
      }
      if (k < 0) {
        next.push_back(tr);
      } else {
        auto push_ccw = [&](int a, int b, int c) {
          if (orient2d(nodes[a], nodes[b], nodes[c]) < 0) std::swap(b, c);
          next.push_back({a, b, c});
        };
        push_ccw(bi, mid, k);
        push_ccw(mid, bj, k);
      }
    }
    tris.swap(next);
  }
  throw DegenerateGeometry("edge refinement did not terminate");
}

std::vector<int> compute_boundary(const std::vector<std::array<int, 3>>& tris) {
  std::map<Edge, int> counts;
  for (const auto& tr : tris)
    for (int e = 0; e < 3; ++e) ++counts[Edge(tr[e], tr[(e + 1) % 3])];
  std::set<int> nodes;
  for (const auto& [edge, count] : counts)
    if (count == 1) {
      nodes.insert(edge.a);
      nodes.insert(edge.b);
    }
  return {nodes.begin(), nodes.end()};
}

}  // namespace

double Mesh::total_area() const {
  double area = 0.0;
  for (const auto& tr : triangles)
    area += tri_area(nodes[tr[0]], nodes[tr[1]], nodes[tr[2]]);
  return area;
}

double Mesh::max_edge_length() const {
  double best = 0.0;
  for (const auto& tr : triangles)
    for (int e = 0; e < 3; ++e)
      best = std::max(best, (nodes[tr[e]] - nodes[tr[(e + 1) % 3]]).norm());
  return best;
}

Mesh build_mesh(const std::vector<Eigen::Vector2d>& points, double buffer_fraction,
                double max_edge) {
  if (buffer_fraction < 0) throw ConfigError("buffer_fraction must be >= 0");
  if (max_edge <= 0) throw ConfigError("max_edge must be > 0");

  // Drop exact duplicates, keeping first occurrences.
  std::vector<Vec2> pts;
  for (const auto& p : points) {
    bool dup = false;
    for (const auto& q : pts)
      if ((p - q).norm() < 1e-9) dup = true;
    if (!dup) pts.push_back(p);
  }
  if (pts.size() < 3) throw DegenerateGeometry("need at least 3 distinct points");

  double diameter = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      diameter = std::max(diameter, (pts[i] - pts[j]).norm());

  double max_cross = 0.0;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i)
    max_cross = std::max(max_cross, std::abs(orient2d(pts[0], pts[i], pts[i + 1])));
  for (std::size_t i = 1; i + 1 < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      max_cross = std::max(max_cross, std::abs(orient2d(pts[0], pts[i], pts[j])));
  if (max_cross < 1e-12 * diameter * diameter) throw DegenerateGeometry("points are collinear");

  if (buffer_fraction > 0) {
    Vec2 centroid = Vec2::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());
    double reach = 0.0;
    for (const auto& p : pts) reach = std::max(reach, (p - centroid).norm());
    double ring_r = reach + buffer_fraction * diameter;
    double spacing = std::isfinite(max_edge) ? max_edge : ring_r;
    int n_ring = std::max(8, static_cast<int>(std::ceil(2.0 * M_PI * ring_r / spacing)));
    for (int k = 0; k < n_ring; ++k) {
      double angle = 2.0 * M_PI * k / n_ring;
      pts.push_back(centroid + ring_r * Vec2(std::cos(angle), std::sin(angle)));
    }
  }

  auto tris = bowyer_watson(pts);
  if (tris.empty()) throw DegenerateGeometry("triangulation is empty");
  refine_longest_edge(pts, tris, max_edge);

  Mesh mesh;
  mesh.nodes = std::move(pts);
  mesh.triangles = std::move(tris);
  mesh.boundary_nodes = compute_boundary(mesh.triangles);

  for (const auto& tr : mesh.triangles)
    if (tri_area(mesh.nodes[tr[0]], mesh.nodes[tr[1]], mesh.nodes[tr[2]]) <= 0)
      throw DegenerateGeometry("degenerate triangle in mesh");
  return mesh;
}

Mesh build_mesh(const std::vector<Station>& stations, double buffer_fraction, double max_edge) {
  std::vector<Vec2> pts;
  pts.reserve(stations.size());
  for (const auto& s : stations) pts.emplace_back(s.x, s.y);
  return build_mesh(pts, buffer_fraction, max_edge);
}

Mesh regular_mesh(double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 2 || ny < 2) throw ConfigError("regular_mesh needs nx, ny >= 2");
  Mesh mesh;
  mesh.nodes.reserve(static_cast<size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      mesh.nodes.emplace_back(x0 + (x1 - x0) * i / (nx - 1), y0 + (y1 - y0) * j / (ny - 1));
  auto id = [&](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      mesh.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  mesh.boundary_nodes = compute_boundary(mesh.triangles);
  return mesh;
}

FemMatrices assemble_fem(const Mesh& mesh) {
  const int m = mesh.node_count();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(m);
  std::vector<Triplet> triplets;
  triplets.reserve(mesh.triangles.size() * 9);

  for (const auto& tr : mesh.triangles) {
    const Vec2& p0 = mesh.nodes[tr[0]];
    const Vec2& p1 = mesh.nodes[tr[1]];
    const Vec2& p2 = mesh.nodes[tr[2]];
    double two_a = orient2d(p0, p1, p2);
    double area = 0.5 * std::abs(two_a);
    if (area <= 0) throw DegenerateGeometry("zero-area triangle in FEM assembly");

    // grad phi_i = ((y_j - y_k), (x_k - x_j)) / (2 |T|) for cyclic (i, j, k)
    Vec2 grad[3];
    for (int e = 0; e < 3; ++e) {
      const Vec2& pj = mesh.nodes[tr[(e + 1) % 3]];
      const Vec2& pk = mesh.nodes[tr[(e + 2) % 3]];
      grad[e] = Vec2(pj.y() - pk.y(), pk.x() - pj.x()) / two_a;
    }
    for (int a = 0; a < 3; ++a) {
      mass[tr[a]] += area / 3.0;
      for (int b = 0; b < 3; ++b)
        triplets.emplace_back(tr[a], tr[b], area * grad[a].dot(grad[b]));
    }
  }

  FemMatrices fem;
  fem.mass_lumped = std::move(mass);
  fem.stiffness = SpMat(m, m);
  fem.stiffness.setFromTriplets(triplets.begin(), triplets.end());
  fem.stiffness.makeCompressed();
  return fem;
}

Projector project(const Mesh& mesh, const std::vector<Eigen::Vector2d>& points) {
  std::vector<Triplet> triplets;
  triplets.reserve(points.size() * 3);
  const double tol = -1e-9;

  for (std::size_t ip = 0; ip < points.size(); ++ip) {
    const Vec2& p = points[ip];
    bool found = false;
    for (std::size_t t = 0; t < mesh.triangles.size() && !found; ++t) {
      const auto& tr = mesh.triangles[t];
      const Vec2& a = mesh.nodes[tr[0]];
      const Vec2& b = mesh.nodes[tr[1]];
      const Vec2& c = mesh.nodes[tr[2]];
      double denom = orient2d(a, b, c);
      double w0 = orient2d(p, b, c) / denom;
      double w1 = orient2d(a, p, c) / denom;
      double w2 = orient2d(a, b, p) / denom;
      if (w0 >= tol && w1 >= tol && w2 >= tol) {
        double w[3] = {std::clamp(w0, 0.0, 1.0), std::clamp(w1, 0.0, 1.0),
                       std::clamp(w2, 0.0, 1.0)};
        double sum = w[0] + w[1] + w[2];
        for (int v = 0; v < 3; ++v)
          if (w[v] > 0) triplets.emplace_back(static_cast<int>(ip), tr[v], w[v] / sum);
        found = true;
      }
    }
    if (!found) throw PointOutsideMesh(static_cast<int>(ip));
  }

  Projector proj;
  proj.a = SpMat(static_cast<int>(points.size()), mesh.node_count());
  proj.a.setFromTriplets(triplets.begin(), triplets.end());
  proj.a.makeCompressed();
  return proj;
}

void write_mesh_csv(const Mesh& mesh, const std::string& nodes_path,
                    const std::string& triangles_path) {
  std::ofstream nodes(nodes_path);
  if (!nodes) throw IoError("cannot open " + nodes_path);
  nodes.precision(17);
  nodes << "node,x_km,y_km,boundary\n";
  std::set<int> boundary(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end());
  for (int i = 0; i < mesh.node_count(); ++i)
    nodes << i << "," << mesh.nodes[i].x() << "," << mesh.nodes[i].y() << ","
          << (boundary.count(i) ? 1 : 0) << "\n";

  std::ofstream tris(triangles_path);
  if (!tris) throw IoError("cannot open " + triangles_path);
  tris << "triangle,n0,n1,n2\n";
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    tris << t << "," << mesh.triangles[t][0] << "," << mesh.triangles[t][1] << ","
         << mesh.triangles[t][2] << "\n";
}

}  // namespace pmfield
