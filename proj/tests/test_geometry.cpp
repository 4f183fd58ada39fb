#include "doctest.h"

#include "gsgw/errors.hpp"
#include "gsgw/geometry.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/rigid.hpp"
#include "test_util.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

using namespace gsgw;
using namespace gsgw::testing;

namespace {

template <typename F>
std::string error_text(F&& f, ErrorKind expected) {
  try {
    f();
  } catch (const Error& e) {
    CHECK(e.kind() == expected);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

PointCloud path3() {
  Mat x(3, 1);
  x << 0, 1, 2;
  return PointCloud(x);
}

}  // namespace

TEST_CASE("OFF parsing") {
  const Mesh m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  CHECK(m.vertices.size() == 3);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == std::array<std::size_t, 3>{0, 1, 2});
  CHECK(m.source_format == MeshFormat::off);

  // Counts on the keyword line, comments, and a quad that is fan-triangulated.
  const Mesh q = parse_off("OFF 4 1 0\n# corner\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  CHECK(q.faces.size() == 2);
  CHECK(q.faces[1] == std::array<std::size_t, 3>{0, 2, 3});

  // No keyword line at all.
  CHECK(parse_off("3 0 0\n0 0 0\n1 0 0\n0 1 0\n").vertices.size() == 3);

  const auto msg = error_text([] { parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"); }, ErrorKind::ParseError);
  CHECK(msg.find("line 6") != std::string::npos);
  CHECK(error_text([] { parse_off("OFF\n3 1 0\n0 0 0\n1 x 0\n"); }, ErrorKind::ParseError).find("line 4") !=
        std::string::npos);
  error_text([] { parse_off("OFF\n3 1 0\n0 0 0\n"); }, ErrorKind::ParseError);
}

TEST_CASE("OBJ parsing") {
  const Mesh pts = parse_obj("# cloud\nv 0 0 0\nv 1 2 3\nvn 0 0 1\nv 4 5 6\n");
  CHECK(pts.vertices.size() == 3);
  CHECK(pts.faces.empty());
  CHECK(pts.vertices.points()(1, 2) == 3.0);

  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\nf -4 -3 -2\n");
  REQUIRE(m.faces.size() == 3);
  CHECK(m.faces[0] == std::array<std::size_t, 3>{0, 1, 2});
  CHECK(m.faces[1] == std::array<std::size_t, 3>{0, 2, 3});
  CHECK(m.faces[2] == std::array<std::size_t, 3>{0, 1, 2});

  CHECK(error_text([] { parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 9\n"); }, ErrorKind::ParseError).find("line 3") !=
        std::string::npos);
  error_text([] { parse_obj("f 1 2 3\n"); }, ErrorKind::ParseError);
}

TEST_CASE("npy round trip and guards") {
  Rng rng(3);
  const Mat a = random_points(rng, 7, 3);
  const std::string bytes = encode_npy(a);
  CHECK((bytes.size() - a.size() * 8) % 64 == 0);
  CHECK(parse_npy(bytes) == a);

  // Hand-built float32 file.
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 1), }";
  header.append((64 - (10 + header.size() + 1) % 64) % 64, ' ');
  header.push_back('\n');
  std::string f32("\x93NUMPY\x01\x00", 8);
  f32.push_back(static_cast<char>(header.size()));
  f32.push_back('\0');
  f32 += header;
  const float vals[2] = {1.5f, -2.25f};
  f32.append(reinterpret_cast<const char*>(vals), sizeof(vals));
  const Mat b = parse_npy(f32);
  CHECK(b.rows() == 2);
  CHECK(b(1, 0) == -2.25);

  CHECK(error_text([] { parse_npy("\x93NUM"); }, ErrorKind::ParseError).find("byte 0") != std::string::npos);
  error_text([&] { parse_npy(bytes.substr(0, bytes.size() - 3)); }, ErrorKind::ParseError);
  std::string fortran = bytes;
  fortran.replace(fortran.find("False"), 5, "True ");
  error_text([&] { parse_npy(fortran); }, ErrorKind::ParseError);

  const auto dir = std::filesystem::temp_directory_path() / "gsgw_geom_test";
  std::filesystem::create_directories(dir);
  write_npy(dir / "a.npy", a);
  CHECK(read_npy(dir / "a.npy") == a);
  const Mesh m = load_mesh(dir / "a.npy");
  CHECK(m.vertices.size() == 7);
  CHECK(m.faces.empty());
  error_text([&] { load_mesh(dir / "missing.off"); }, ErrorKind::IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("normalize_cloud") {
  Mat x(2, 2);
  x << 2, 0, 0, 0;
  const PointCloud n = normalize_cloud(PointCloud(x));
  Mat expect(2, 2);
  expect << 1, 0, -1, 0;
  CHECK((n.points() - expect).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(4);
  const PointCloud once = normalize_cloud(PointCloud(random_points(rng, 30, 3)));
  const PointCloud twice = normalize_cloud(once);
  CHECK((once.points() - twice.points()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(std::abs(once.points().rowwise().norm().maxCoeff() - 1.0) <= 1e-15);

  error_text([] { normalize_cloud(PointCloud(Mat::Ones(1, 3))); }, ErrorKind::DegenerateInput);
  error_text([] { normalize_cloud(PointCloud(Mat::Ones(4, 2))); }, ErrorKind::DegenerateInput);
}

TEST_CASE("geodesic matrix") {
  const GeodesicMatrix g = geodesic_matrix(path3(), 1, false);
  Mat expect(3, 3);
  expect << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  CHECK(g.cost.entries == expect);
  CHECK(g.graph_k == 1);
  CHECK(geodesic_matrix(path3(), 1, true).cost.entries == expect / 2.0);

  Rng rng(5);
  const PointCloud cloud(random_points(rng, 25, 3));
  const GeodesicMatrix full = geodesic_matrix(cloud, 24, false);
  const CostMatrix euclid = build_cost_matrix(cloud, CostConvention::distance);
  CHECK((full.cost.entries - euclid.entries).cwiseAbs().maxCoeff() <= 1e-12);

  const GeodesicMatrix knn = geodesic_matrix(cloud, 4, true);
  knn.cost.validate();
  CHECK(knn.cost.entries.maxCoeff() == 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto i = Eigen::Index(rng.below(25)), j = Eigen::Index(rng.below(25)), k = Eigen::Index(rng.below(25));
    CHECK(knn.cost.entries(i, k) <= knn.cost.entries(i, j) + knn.cost.entries(j, k) + 1e-9);
  }
  // Geodesics dominate straight lines.
  CHECK((geodesic_matrix(cloud, 4, false).cost.entries - euclid.entries).minCoeff() >= -1e-12);

  CHECK(geodesic_matrix(PointCloud(Mat::Zero(1, 3)), 5, true).cost.entries(0, 0) == 0.0);
  error_text([] { geodesic_matrix(path3(), 0, false); }, ErrorKind::InvalidInput);
}

TEST_CASE("geodesic results do not depend on the thread count") {
  Rng rng(6);
  const PointCloud cloud(random_points(rng, 40, 3));
  setenv("GSGW_THREADS", "1", 1);
  const Mat one = geodesic_matrix(cloud, 5, true).cost.entries;
  setenv("GSGW_THREADS", "3", 1);
  const Mat three = geodesic_matrix(cloud, 5, true).cost.entries;
  unsetenv("GSGW_THREADS");
  CHECK(one == three);
}

TEST_CASE("disconnected graphs are reported") {
  Mat x(5, 1);
  x << 0, 1, 2, 100, 101;
  const auto msg = error_text([&] { geodesic_matrix(PointCloud(x), 1, false); }, ErrorKind::ConnectivityError);
  CHECK(msg.find("sizes 3 2") != std::string::npos);

  Mesh mesh = parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n5 5 5\n3 0 1 2\n");
  error_text([&] { geodesic_matrix(mesh, 3, false); }, ErrorKind::ConnectivityError);
  // Without faces the same vertices fall back to the kNN graph.
  mesh.faces.clear();
  CHECK(geodesic_matrix(mesh, 3, false).graph == GraphKind::knn);
}

TEST_CASE("mesh edge geodesics") {
  const Mesh square = parse_off("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n");
  const GeodesicMatrix g = geodesic_matrix(square, 20, false);
  CHECK(g.graph == GraphKind::mesh_edges);
  CHECK(g.cost.entries(1, 3) == doctest::Approx(2.0));
  CHECK(g.cost.entries(0, 2) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("geodesic error") {
  const GeodesicMatrix g = geodesic_matrix(path3(), 1, true);
  const Correspondence id{0, 1, 2};
  CHECK(geodesic_error(id, id, g) == 0.0);
  CHECK(geodesic_error({2, 2, 0}, {0, 0, 2}, g) == 1.0);

  // Enumerate all 27 maps against the identity; each error is the mean of
  // hand-read path distances |p(i) - i| / 2, and their average is 4/9.
  double sum = 0.0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 3; ++c) {
        const double hand = (double(a) + std::abs(double(b) - 1.0) + std::abs(double(c) - 2.0)) / 6.0;
        const double got = geodesic_error({a, b, c}, id, g);
        CHECK(got == doctest::Approx(hand).epsilon(1e-15));
        sum += got;
      }
  CHECK(sum / 27.0 == doctest::Approx(4.0 / 9.0).epsilon(1e-14));

  // An unnormalised matrix is divided by its maximum on the fly.
  CHECK(geodesic_error({2, 2, 0}, {0, 0, 2}, geodesic_matrix(path3(), 1, false)) == 1.0);
  error_text([&] { geodesic_error({0, 1, 3}, id, g); }, ErrorKind::InvalidInput);
  error_text([&] { geodesic_error({0, 1}, id, g); }, ErrorKind::InvalidInput);
}

TEST_CASE("plan_to_correspondence") {
  CHECK(plan_to_correspondence(permutation_plan({2, 0, 1})) == Correspondence{2, 0, 1});
  const Mat t23 = hard_plan(Vec::LinSpaced(2, 0, 1), Vec::LinSpaced(3, 0, 1)).plan;
  CHECK(plan_to_correspondence(t23) == Correspondence{0, 2});
  Mat tie(1, 2);
  tie << 0.5, 0.5;
  CHECK(plan_to_correspondence(tie) == Correspondence{0});
  error_text([] { plan_to_correspondence(Mat::Zero(2, 2)); }, ErrorKind::InvalidInput);
}

TEST_CASE("barycentric interpolation") {
  Rng rng(7);
  const PointCloud x(random_points(rng, 5, 3));
  const PointCloud y(random_points(rng, 5, 3));
  const Permutation sigma{3, 0, 4, 1, 2};
  const Mat plan = permutation_plan(sigma);
  CHECK(barycentric_interpolate(x, y, plan, 0.0).points() == x.points());
  const Mat end = barycentric_interpolate(x, y, plan, 1.0).points();
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(end.row(i) == y.points().row(Eigen::Index(sigma[std::size_t(i)])));

  Mat a(1, 1), b(1, 1), one(1, 1);
  a << 0;
  b << 2;
  one << 1;
  CHECK(barycentric_interpolate(PointCloud(a), PointCloud(b), one, 0.5).points()(0, 0) == 1.0);

  Mat zero_row = plan;
  zero_row.row(2).setZero();
  error_text([&] { barycentric_interpolate(x, y, zero_row, 0.5); }, ErrorKind::InvalidInput);
  error_text([&] { barycentric_interpolate(x, PointCloud(random_points(rng, 5, 2)), plan, 0.5); },
             ErrorKind::ShapeError);
}

TEST_CASE("rigid sampling and cost invariance") {
  Rng rng(8);
  for (std::size_t d : {1, 2, 3, 5}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const RigidTransform g = sample_rigid(d, seed);
      CHECK(g.orthogonality_error() <= 1e-12);
      CHECK(g.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
      const Mat x = random_points(rng, 12, Eigen::Index(d));
      CHECK((g.apply_inverse(g.apply(x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
      for (auto conv : {CostConvention::distance, CostConvention::squared_distance}) {
        const Mat before = build_cost_matrix(PointCloud(x), conv).entries;
        const Mat after = build_cost_matrix(PointCloud(g.apply(x)), conv).entries;
        CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }
}

TEST_CASE("farthest point landmarks") {
  Rng rng(9);
  const PointCloud cloud(random_points(rng, 60, 3));
  const auto picks = farthest_point_sample(cloud, 18, 1);
  CHECK(picks.size() == 18);
  CHECK(std::set<std::size_t>(picks.begin(), picks.end()).size() == 18);
  CHECK(farthest_point_sample(cloud, 18, 1) == picks);
  CHECK(farthest_point_sample(cloud, 100, 1).size() == 60);

  const GeodesicMatrix g = geodesic_matrix(cloud, 8, true);
  Correspondence id(60);
  std::iota(id.begin(), id.end(), std::size_t{0});
  const LandmarkReport perfect = landmark_error(id, id, cloud, g);
  CHECK(perfect.per_repetition.size() == 4);
  CHECK(perfect.mean == 0.0);

  Correspondence shifted(60);
  for (std::size_t i = 0; i < 60; ++i) shifted[i] = (i + 1) % 60;
  const LandmarkReport rep = landmark_error(shifted, id, cloud, g);
  CHECK(rep.mean > 0.0);
  CHECK(rep.mean <= 1.0);
}
