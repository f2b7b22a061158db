#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "pmfield/dataset.hpp"
#include "pmfield/sparse.hpp"

namespace pmfield {

// Conforming planar triangulation. Triangles are stored CCW; boundary_nodes
// are the nodes on edges shared by exactly one triangle.
struct Mesh {
  std::vector<Eigen::Vector2d> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> boundary_nodes;  // sorted

  int node_count() const { return static_cast<int>(nodes.size()); }
  double total_area() const;
  double max_edge_length() const;
};

// P1 finite-element matrices on a mesh: lumped (diagonal) mass C and the
// stiffness matrix G, with G stored as a full symmetric sparse matrix.
struct FemMatrices {
  Eigen::VectorXd mass_lumped;  // C_ii = sum of adjacent triangle areas / 3
  SpMat stiffness;              // G_ab = sum_T |T| (grad phi_a . grad phi_b)
};

// Barycentric interpolation weights from mesh nodes to arbitrary points.
// Each row has at most 3 nonzeros summing to 1.
struct Projector {
  SpMat a;  // n_points x n_nodes
};

// Delaunay triangulation (incremental Bowyer-Watson) of the station points
// plus a ring of buffer points at distance buffer_fraction * domain-diameter
// outside the stations, refined by bisecting the globally longest edge until
// every edge is <= max_edge. buffer_fraction == 0 skips the ring. Throws
// DegenerateGeometry when the points are collinear.
Mesh build_mesh(const std::vector<Eigen::Vector2d>& points, double buffer_fraction,
                double max_edge);
Mesh build_mesh(const std::vector<Station>& stations, double buffer_fraction, double max_edge);

// Structured triangulation of [x0,x1] x [y0,y1] with nx x ny nodes.
Mesh regular_mesh(double x0, double x1, double y0, double y1, int nx, int ny);

FemMatrices assemble_fem(const Mesh& mesh);

// Brute-force point location over triangles (first containing triangle wins,
// so boundary ties resolve to the lowest triangle index). Throws
// PointOutsideMesh with the offending point's index.
Projector project(const Mesh& mesh, const std::vector<Eigen::Vector2d>& points);

// Node and triangle tables for external plotting.
void write_mesh_csv(const Mesh& mesh, const std::string& nodes_path,
                    const std::string& triangles_path);

}  // namespace pmfield
