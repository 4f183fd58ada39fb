#include "gsgw/geometry.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/parallel.hpp"
#include "gsgw/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <regex>
#include <sstream>

namespace gsgw {

namespace {

// Splits text into lines, keeping 1-based numbers for error messages.
struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line = 0;

  bool next(std::string_view& out) {
    if (pos > text.size()) return false;
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    out = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    return true;
  }
};

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Comment-stripped, blank-skipping reader used by the OFF grammar.
bool next_content(LineReader& r, std::vector<std::string_view>& toks) {
  std::string_view line;
  while (r.next(line)) {
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    toks = tokens(line);
    if (!toks.empty()) return true;
  }
  return false;
}

[[noreturn]] void parse_fail(const std::string& where, const std::string& what) {
  fail(ErrorKind::ParseError, where + ": " + what);
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line); }

double to_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    parse_fail(at_line(line), "bad number '" + std::string(tok) + "'");
  return v;
}

long long to_int(std::string_view tok, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    parse_fail(at_line(line), "bad integer '" + std::string(tok) + "'");
  return v;
}

void fan_triangulate(const std::vector<std::size_t>& poly, std::vector<std::array<std::size_t, 3>>& faces) {
  for (std::size_t k = 1; k + 1 < poly.size(); ++k) faces.push_back({poly[0], poly[k], poly[k + 1]});
}

Mat rows_to_mat(const std::vector<std::array<double, 3>>& rows) {
  Mat m(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < 3; ++c) m(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool little_endian_host() {
  const std::uint16_t probe = 1;
  unsigned char b = 0;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

struct Edge {
  std::size_t to;
  double w;
};
using Graph = std::vector<std::vector<Edge>>;

void add_edge(Graph& g, std::size_t a, std::size_t b, double w) {
  if (a == b) return;
  for (const auto& e : g[a])
    if (e.to == b) return;
  g[a].push_back({b, w});
  g[b].push_back({a, w});
}

void require_connected(const Graph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> comp(n, n);
  std::vector<std::size_t> sizes;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != n) continue;
    const std::size_t id = sizes.size();
    std::size_t count = 0;
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      ++count;
      for (const auto& e : g[u])
        if (comp[e.to] == n) {
          comp[e.to] = id;
          stack.push_back(e.to);
        }
    }
    sizes.push_back(count);
  }
  if (sizes.size() <= 1) return;
  std::sort(sizes.rbegin(), sizes.rend());
  std::string msg = "graph has " + std::to_string(sizes.size()) + " components of sizes";
  for (auto s : sizes) msg += " " + std::to_string(s);
  fail(ErrorKind::ConnectivityError, msg);
}

void dijkstra(const Graph& g, std::size_t source, double* out) {
  const std::size_t n = g.size();
  std::fill(out, out + n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  out[source] = 0.0;
  heap.push({0.0, source});
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (d > out[u]) continue;
    for (const auto& e : g[u]) {
      const double nd = d + e.w;
      if (nd < out[e.to]) {
        out[e.to] = nd;
        heap.push({nd, e.to});
      }
    }
  }
}

GeodesicMatrix all_pairs(const Graph& g, bool normalize) {
  require_connected(g);
  const std::size_t n = g.size();
  Mat d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(n, [&](std::size_t s) { dijkstra(g, s, d.row(static_cast<Eigen::Index>(s)).data()); });
  // Paths are symmetric in exact arithmetic; averaging removes summation-order noise.
  Mat sym = 0.5 * (d + d.transpose());
  const double mx = sym.maxCoeff();
  GeodesicMatrix out;
  if (normalize && mx > 0.0) sym /= mx;
  out.cost.entries = std::move(sym);
  out.cost.convention = CostConvention::distance;
  out.normalized = normalize;
  return out;
}

}  // namespace

Mesh parse_off(std::string_view text) {
  LineReader r{text};
  std::vector<std::string_view> toks;
  if (!next_content(r, toks)) parse_fail(at_line(r.line), "empty OFF file");
  if (toks[0] == "OFF") {
    toks.erase(toks.begin());
    if (toks.empty() && !next_content(r, toks)) parse_fail(at_line(r.line), "missing counts line");
  } else if (toks[0].substr(0, 3) == "OFF") {
    parse_fail(at_line(r.line), "unsupported OFF variant '" + std::string(toks[0]) + "'");
  }
  if (toks.size() < 2) parse_fail(at_line(r.line), "counts line needs 'nv nf [ne]'");
  const long long nv = to_int(toks[0], r.line);
  const long long nf = to_int(toks[1], r.line);
  if (nv < 1 || nf < 0) parse_fail(at_line(r.line), "invalid counts");

  std::vector<std::array<double, 3>> verts;
  verts.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    if (!next_content(r, toks)) parse_fail(at_line(r.line), "expected " + std::to_string(nv) + " vertices");
    if (toks.size() < 3) parse_fail(at_line(r.line), "vertex needs 3 coordinates");
    verts.push_back({to_double(toks[0], r.line), to_double(toks[1], r.line), to_double(toks[2], r.line)});
  }
  Mesh mesh;
  mesh.source_format = MeshFormat::off;
  for (long long f = 0; f < nf; ++f) {
    if (!next_content(r, toks)) parse_fail(at_line(r.line), "expected " + std::to_string(nf) + " faces");
    const long long k = to_int(toks[0], r.line);
    if (k < 3 || static_cast<long long>(toks.size()) < k + 1) parse_fail(at_line(r.line), "malformed face");
    std::vector<std::size_t> poly;
    for (long long c = 1; c <= k; ++c) {
      const long long idx = to_int(toks[static_cast<std::size_t>(c)], r.line);
      if (idx < 0 || idx >= nv) parse_fail(at_line(r.line), "face index " + std::to_string(idx) + " out of range");
      poly.push_back(static_cast<std::size_t>(idx));
    }
    fan_triangulate(poly, mesh.faces);
  }
  mesh.vertices = PointCloud(rows_to_mat(verts));
  return mesh;
}

Mesh parse_obj(std::string_view text) {
  LineReader r{text};
  std::string_view line;
  std::vector<std::array<double, 3>> verts;
  std::vector<std::pair<std::vector<long long>, std::size_t>> raw_faces;
  while (r.next(line)) {
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) parse_fail(at_line(r.line), "vertex needs 3 coordinates");
      verts.push_back({to_double(toks[1], r.line), to_double(toks[2], r.line), to_double(toks[3], r.line)});
    } else if (toks[0] == "f") {
      if (toks.size() < 4) parse_fail(at_line(r.line), "face needs at least 3 vertices");
      std::vector<long long> idx;
      for (std::size_t c = 1; c < toks.size(); ++c) idx.push_back(to_int(toks[c].substr(0, toks[c].find('/')), r.line));
      // Negative indices are relative to the vertices read so far.
      for (auto& i : idx)
        if (i < 0) i += static_cast<long long>(verts.size()) + 1;
      raw_faces.push_back({std::move(idx), r.line});
    }
  }
  if (verts.empty()) parse_fail(at_line(r.line), "no vertices");
  Mesh mesh;
  mesh.source_format = MeshFormat::obj;
  for (const auto& [idx, ln] : raw_faces) {
    std::vector<std::size_t> poly;
    for (long long i : idx) {
      if (i < 1 || i > static_cast<long long>(verts.size()))
        parse_fail(at_line(ln), "face index " + std::to_string(i) + " out of range");
      poly.push_back(static_cast<std::size_t>(i - 1));
    }
    fan_triangulate(poly, mesh.faces);
  }
  mesh.vertices = PointCloud(rows_to_mat(verts));
  return mesh;
}

Mat parse_npy(std::string_view bytes) {
  static constexpr char kMagic[] = "\x93NUMPY";
  if (bytes.size() < 6 || bytes.substr(0, 6) != std::string_view(kMagic, 6)) parse_fail("byte 0", "bad npy magic");
  if (bytes.size() < 10) parse_fail("byte 6", "truncated npy preamble");
  if (bytes[6] != 1 || bytes[7] != 0) parse_fail("byte 6", "only npy version 1.0 is supported");
  const auto hlen = static_cast<std::size_t>(static_cast<unsigned char>(bytes[8])) |
                    (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < 10 + hlen) parse_fail("byte 10", "truncated npy header");
  const std::string header(bytes.substr(10, hlen));

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']*)')")))
    parse_fail("byte 10", "npy header lacks descr");
  const std::string descr = m[1];
  std::size_t width = 0;
  if (descr == "<f8")
    width = 8;
  else if (descr == "<f4")
    width = 4;
  else
    parse_fail("byte 10", "unsupported dtype " + descr);
  if (!std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")))
    parse_fail("byte 10", "npy header lacks fortran_order");
  if (m[1] == "True") parse_fail("byte 10", "fortran_order arrays are not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))")))
    parse_fail("byte 10", "only 2-D npy arrays are supported");
  const std::size_t rows = std::stoull(m[1]);
  const std::size_t cols = std::stoull(m[2]);

  const std::size_t offset = 10 + hlen;
  const std::size_t need = rows * cols * width;
  if (bytes.size() - offset < need)
    parse_fail("byte " + std::to_string(bytes.size()), "npy data truncated, expected " + std::to_string(need) + " bytes");
  if (!little_endian_host()) fail(ErrorKind::InternalError, "big-endian hosts are not supported");
  Mat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const char* src = bytes.data() + offset;
  for (std::size_t k = 0; k < rows * cols; ++k) {
    if (width == 8) {
      double v;
      std::memcpy(&v, src + 8 * k, 8);
      out.data()[k] = v;
    } else {
      float v;
      std::memcpy(&v, src + 4 * k, 4);
      out.data()[k] = static_cast<double>(v);
    }
  }
  return out;
}

std::string encode_npy(const Mat& array) {
  if (!little_endian_host()) fail(ErrorKind::InternalError, "big-endian hosts are not supported");
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(array.rows()) + ", " +
                       std::to_string(array.cols()) + "), }";
  // Pad so the data starts on a 64-byte boundary, newline-terminated.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>(header.size() >> 8));
  out += header;
  out.append(reinterpret_cast<const char*>(array.data()), static_cast<std::size_t>(array.size()) * sizeof(double));
  return out;
}

void write_npy(const std::filesystem::path& path, const Mat& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  const std::string bytes = encode_npy(array);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

Mat read_npy(const std::filesystem::path& path) { return parse_npy(read_file(path)); }

MeshFormat format_from_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return MeshFormat::obj;
  if (ext == ".off") return MeshFormat::off;
  if (ext == ".npy") return MeshFormat::npy;
  fail(ErrorKind::InvalidInput, "unknown mesh extension '" + ext + "'");
}

Mesh load_mesh(const std::filesystem::path& path, MeshFormat format) {
  const std::string data = read_file(path);
  try {
    switch (format) {
      case MeshFormat::off:
        return parse_off(data);
      case MeshFormat::obj:
        return parse_obj(data);
      case MeshFormat::npy: {
        Mesh mesh;
        mesh.vertices = PointCloud(parse_npy(data));
        mesh.source_format = MeshFormat::npy;
        return mesh;
      }
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) fail(ErrorKind::ParseError, path.string() + ": " + e.what());
    throw;
  }
  fail(ErrorKind::InternalError, "unreachable mesh format");
}

Mesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_extension(path)); }

PointCloud normalize_cloud(const PointCloud& cloud) {
  const Mat& x = cloud.points();
  Mat centred = x.rowwise() - x.colwise().mean();
  const double scale = centred.rowwise().norm().maxCoeff();
  require(scale > 0.0, ErrorKind::DegenerateInput, "cannot normalize a cloud whose points coincide");
  return PointCloud(Mat(centred / scale));
}

GeodesicMatrix geodesic_matrix(const PointCloud& cloud, std::size_t k, bool normalize) {
  require(k >= 1, ErrorKind::InvalidInput, "kNN graph needs k >= 1");
  const std::size_t n = cloud.size();
  const Mat& x = cloud.points();
  const std::size_t kk = std::min(k, n - 1);
  Graph g(n);
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.push_back({(x.row(Eigen::Index(i)) - x.row(Eigen::Index(j))).squaredNorm(), j});
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end());
    for (std::size_t c = 0; c < kk; ++c) add_edge(g, i, cand[c].second, std::sqrt(cand[c].first));
  }
  GeodesicMatrix out = all_pairs(g, normalize);
  out.graph_k = k;
  out.graph = GraphKind::knn;
  return out;
}

GeodesicMatrix geodesic_matrix_edges(const Mesh& mesh, bool normalize) {
  const std::size_t n = mesh.vertices.size();
  const Mat& x = mesh.vertices.points();
  Graph g(n);
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 3; ++e) {
      const std::size_t a = f[static_cast<std::size_t>(e)];
      const std::size_t b = f[static_cast<std::size_t>((e + 1) % 3)];
      require(a < n && b < n, ErrorKind::InvalidInput, "face index out of range");
      add_edge(g, a, b, (x.row(Eigen::Index(a)) - x.row(Eigen::Index(b))).norm());
    }
  GeodesicMatrix out = all_pairs(g, normalize);
  out.graph = GraphKind::mesh_edges;
  return out;
}

GeodesicMatrix geodesic_matrix(const Mesh& mesh, std::size_t k, bool normalize) {
  if (!mesh.faces.empty()) return geodesic_matrix_edges(mesh, normalize);
  return geodesic_matrix(mesh.vertices, k, normalize);
}

double geodesic_error(const Correspondence& predicted, const Correspondence& truth, const GeodesicMatrix& cy,
                      const std::vector<std::size_t>& sources) {
  require(predicted.size() == truth.size(), ErrorKind::InvalidInput, "prediction and truth differ in length");
  require(!sources.empty(), ErrorKind::InvalidInput, "no source indices to score");
  const std::size_t m = cy.cost.size();
  const double scale = cy.normalized ? 1.0 : cy.cost.entries.maxCoeff();
  double total = 0.0;
  for (std::size_t i : sources) {
    require(i < predicted.size(), ErrorKind::InvalidInput, "source index out of range");
    require(predicted[i] < m && truth[i] < m, ErrorKind::InvalidInput, "correspondence index out of range");
    total += cy.cost.entries(Eigen::Index(predicted[i]), Eigen::Index(truth[i]));
  }
  const double mean = total / static_cast<double>(sources.size());
  return scale > 0.0 ? mean / scale : mean;
}

double geodesic_error(const Correspondence& predicted, const Correspondence& truth, const GeodesicMatrix& cy) {
  std::vector<std::size_t> all(predicted.size());
  std::iota(all.begin(), all.end(), 0);
  return geodesic_error(predicted, truth, cy, all);
}

Correspondence plan_to_correspondence(const Mat& plan) {
  Correspondence out(static_cast<std::size_t>(plan.rows()));
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < plan.cols(); ++j)
      if (plan(i, j) > plan(i, best)) best = j;
    require(plan.cols() > 0 && plan(i, best) > 0.0, ErrorKind::InvalidInput,
            "plan row " + std::to_string(i) + " has no positive entry");
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

PointCloud barycentric_interpolate(const PointCloud& x, const PointCloud& y, const Mat& plan, double t) {
  require(x.dim() == y.dim(), ErrorKind::ShapeError, "interpolation needs clouds in the same dimension");
  require(plan.rows() == Eigen::Index(x.size()) && plan.cols() == Eigen::Index(y.size()), ErrorKind::ShapeError,
          "plan shape does not match the clouds");
  require(t >= 0.0 && t <= 1.0, ErrorKind::InvalidInput, "t must lie in [0, 1]");
  const Vec rows = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < rows.size(); ++i)
    require(rows(i) > 0.0, ErrorKind::InvalidInput, "plan row " + std::to_string(i) + " has zero mass");
  // Normalise weights first so a permutation plan reproduces y exactly at t = 1.
  const Mat weights = plan.array().colwise() / rows.array();
  const Mat target = weights * y.points();
  // Endpoints are returned as is: 1 * x + 0 * target would turn -0.0 into +0.0.
  if (t == 0.0) return x;
  if (t == 1.0) return PointCloud(target);
  return PointCloud(Mat((1.0 - t) * x.points() + t * target));
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  count = std::min(count, n);
  const Mat& x = cloud.points();
  Rng rng(seed);
  std::vector<std::size_t> picks{static_cast<std::size_t>(rng.below(n))};
  Vec dist = (x.rowwise() - x.row(Eigen::Index(picks[0]))).rowwise().norm();
  while (picks.size() < count) {
    Eigen::Index next = 0;
    dist.maxCoeff(&next);
    picks.push_back(static_cast<std::size_t>(next));
    dist = dist.cwiseMin(Vec((x.rowwise() - x.row(next)).rowwise().norm()));
  }
  return picks;
}

LandmarkReport landmark_error(const Correspondence& predicted, const Correspondence& truth, const PointCloud& source,
                              const GeodesicMatrix& cy, std::size_t landmarks, std::size_t repetitions,
                              std::uint64_t seed) {
  require(repetitions >= 1, ErrorKind::InvalidInput, "need at least one repetition");
  require(predicted.size() == source.size(), ErrorKind::InvalidInput, "prediction length differs from source size");
  LandmarkReport rep;
  const Rng base(seed);
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto picks = farthest_point_sample(source, landmarks, base.fork(r).next_u64());
    rep.per_repetition.push_back(geodesic_error(predicted, truth, cy, picks));
  }
  rep.mean = std::accumulate(rep.per_repetition.begin(), rep.per_repetition.end(), 0.0) /
             static_cast<double>(repetitions);
  return rep;
}

const char* to_string(MeshFormat f) {
  switch (f) {
    case MeshFormat::obj:
      return "obj";
    case MeshFormat::off:
      return "off";
    case MeshFormat::npy:
      return "npy";
  }
  return "?";
}

const char* to_string(GraphKind g) { return g == GraphKind::knn ? "knn" : "mesh_edges"; }

}  // namespace gsgw
