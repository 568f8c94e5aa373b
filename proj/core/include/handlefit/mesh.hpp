// Copyright 2026 The handlefit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace handlefit {

/// Triangle mesh with 0-based faces. Vertices are stored row-wise (N x 3).
struct TriMesh {
  Eigen::MatrixX3d vertices;
  Eigen::MatrixX3i faces;

  int vertex_count() const { return static_cast<int>(vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }

  /// Length of the axis-aligned bounding box diagonal.
  double bbox_diagonal() const;
};

/// Checks face indices, repeated face corners, N >= 3, N_f >= 1 and edge-graph
/// connectivity. Throws Error on the first violation.
void validate_mesh(const TriMesh& mesh);

/// Reads the triangle-only OBJ subset (`v x y z`, `f i j k`, `#` comments).
/// Anything else (vn, vt, quads, slashed face indices) is a parse error.
TriMesh parse_obj(std::istream& in);
TriMesh load_obj(const std::filesystem::path& path);

/// Writes vertices with 17 significant digits so that load_obj(save_obj(m))
/// reproduces the vertex coordinates bit-for-bit.
std::string format_obj(const TriMesh& mesh);
void save_obj(const TriMesh& mesh, const std::filesystem::path& path);

/// Symmetric cotangent Laplacian without area normalization:
/// L_ij = -w_ij, L_ii = sum_j w_ij, w_ij = 1/2 sum cot(opposite angle).
struct SparseLaplacian {
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;

  int dimension() const { return static_cast<int>(matrix.rows()); }
  /// Entries in (row, col) sorted order.
  std::vector<Eigen::Triplet<double>> triplets() const;
};

/// Per-angle cotangents are clamped to this magnitude before accumulation.
inline constexpr double kCotangentClamp = 1e4;

SparseLaplacian cotangent_laplacian(const TriMesh& mesh);

/// Sorted 1-ring vertex neighbours of every vertex.
std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh);

/// Sorted 2-ring neighbourhoods (1-ring plus neighbours of neighbours,
/// excluding the vertex itself).
std::vector<std::vector<int>> two_ring_neighborhoods(const TriMesh& mesh);

/// Dijkstra distances along mesh edges with Euclidean edge lengths.
std::vector<double> geodesic_distances(const TriMesh& mesh, int source);

/// Greedy farthest point sampling under edge-graph geodesics. The first seed
/// is the lowest-index vertex among those farthest from the vertex centroid.
std::vector<int> farthest_point_sample(const TriMesh& mesh, int count);
std::vector<int> farthest_point_sample(const TriMesh& mesh, int count,
                                       int first_seed);

/// K x N right-stochastic dependency matrix; handle k sits at row k of A*V.
struct HandleMap {
  std::vector<int> seeds;
  Eigen::MatrixXd weights;

  int handle_count() const { return static_cast<int>(weights.rows()); }
  int vertex_count() const { return static_cast<int>(weights.cols()); }
};

/// Tolerance on each row sum of a HandleMap.
inline constexpr double kRowSumTolerance = 1e-9;

/// Throws unless weights are finite, nonnegative, row sums are 1 within
/// kRowSumTolerance, seeds match the row count and index into [0, N).
void validate_handle_map(const HandleMap& handles, int vertex_count);

inline constexpr double kGeodesicFloor = 1e-9;

/// Unnormalized log-weights of one handle row: 1 / max(d, kGeodesicFloor)
/// shifted so that the maximum is 0. exp() of these gives the row before
/// normalization.
Eigen::VectorXd handle_row_logits(std::span<const double> distances);

/// Softmax over vertices of 1/d(v, seed) for every seed (one row per seed).
/// The seed's own distance is 0, so each row is one-hot at its seed up to
/// floating point underflow of the remaining entries.
HandleMap build_handle_map(const TriMesh& mesh, std::span<const int> seeds);

std::string handle_map_to_json(const HandleMap& handles);
HandleMap handle_map_from_json(std::string_view text);
HandleMap load_handle_map(const std::filesystem::path& path);
void save_handle_map(const HandleMap& handles,
                     const std::filesystem::path& path);

}  // namespace handlefit
