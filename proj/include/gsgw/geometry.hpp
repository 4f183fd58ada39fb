#pragma once

#include "gsgw/linalg.hpp"
#include "gsgw/measures.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gsgw {

enum class MeshFormat { obj, off, npy };

struct Mesh {
  PointCloud vertices;
  std::vector<std::array<std::size_t, 3>> faces;
  MeshFormat source_format = MeshFormat::npy;
};

/// Parsers work on in-memory text/bytes; errors are ParseError with "line N" or
/// "byte N" in the message.
Mesh parse_off(std::string_view text);
Mesh parse_obj(std::string_view text);
Mat parse_npy(std::string_view bytes);

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format);
/// Format from the extension (.obj, .off, .npy).
Mesh load_mesh(const std::filesystem::path& path);
MeshFormat format_from_extension(const std::filesystem::path& path);

Mat read_npy(const std::filesystem::path& path);
/// Little-endian float64, C order, version 1.0.
std::string encode_npy(const Mat& array);
void write_npy(const std::filesystem::path& path, const Mat& array);

/// Centre on the mean and divide by the largest point norm.
PointCloud normalize_cloud(const PointCloud& cloud);

enum class GraphKind { knn, mesh_edges };

struct GeodesicMatrix {
  CostMatrix cost;
  std::size_t graph_k = 0;
  bool normalized = false;
  GraphKind graph = GraphKind::knn;
};

/// Shortest paths on the symmetrised k-nearest-neighbour graph.
GeodesicMatrix geodesic_matrix(const PointCloud& cloud, std::size_t k, bool normalize);
/// Shortest paths along triangle edges.
GeodesicMatrix geodesic_matrix_edges(const Mesh& mesh, bool normalize);
/// Edge graph when the mesh has faces, kNN otherwise.
GeodesicMatrix geodesic_matrix(const Mesh& mesh, std::size_t k, bool normalize);

using Correspondence = std::vector<std::size_t>;

/// Mean geodesic distance between predicted and true targets, divided by the
/// matrix maximum when the matrix is not already normalised.
double geodesic_error(const Correspondence& predicted, const Correspondence& truth, const GeodesicMatrix& cy);
/// Same average restricted to the listed source indices.
double geodesic_error(const Correspondence& predicted, const Correspondence& truth, const GeodesicMatrix& cy,
                      const std::vector<std::size_t>& sources);

/// Row argmax; ties go to the smallest column.
Correspondence plan_to_correspondence(const Mat& plan);

PointCloud barycentric_interpolate(const PointCloud& x, const PointCloud& y, const Mat& plan, double t);

/// Greedy farthest-point sampling under Euclidean distance, first point drawn
/// from the seed.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t count, std::uint64_t seed);

struct LandmarkReport {
  std::vector<double> per_repetition;
  double mean = 0.0;
};

/// Landmark protocol: repetitions of farthest-point landmark sets, each scored
/// by geodesic_error on those landmarks.
LandmarkReport landmark_error(const Correspondence& predicted, const Correspondence& truth, const PointCloud& source,
                              const GeodesicMatrix& cy, std::size_t landmarks = 18, std::size_t repetitions = 4,
                              std::uint64_t seed = 0);

const char* to_string(MeshFormat f);
const char* to_string(GraphKind g);

}  // namespace gsgw
