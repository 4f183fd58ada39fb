#include "gsgw/amortized.hpp"

#include "gsgw/errors.hpp"
#include "gsgw/geometry.hpp"
#include "gsgw/monotone_plan.hpp"
#include "gsgw/parallel.hpp"
#include "gsgw/rigid.hpp"
#include "gsgw/rng.hpp"
#include "gsgw/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

namespace gsgw {

IntrinsicTokens tokenize(const PointCloud& cloud, std::size_t k) {
  const std::size_t n = cloud.size();
  require(k >= 1, ErrorKind::InvalidInput, "tokenize needs K >= 1");
  require(n >= k + 1, ErrorKind::InvalidInput,
          "tokenize needs more than K points (N=" + std::to_string(n) + ", K=" + std::to_string(k) + ")");
  const Mat& x = cloud.points();
  IntrinsicTokens tok;
  tok.k = k;
  tok.tokens.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  std::vector<double> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) d.push_back((x.row(Eigen::Index(i)) - x.row(Eigen::Index(j))).squaredNorm());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t c = 0; c < k; ++c) tok.tokens(Eigen::Index(i), Eigen::Index(c)) = d[c];
  }
  return tok;
}

void MatcherSpec::validate() const {
  require(token_dim >= 1, ErrorKind::ConfigError, "matcher token_dim must be positive");
  require(latent >= 1, ErrorKind::ConfigError, "matcher latent must be positive");
}

namespace {

// Offsets of every weight block inside the flat parameter vector.
struct Layout {
  std::size_t K, d;
  bool attention;

  std::size_t rho() const { return K * d + d + d * d + d; }
  std::size_t encoder() const { return (attention ? 3 * d * d : 0) + 2 * (2 * d * d + d); }
  std::size_t context() const { return 2 * d * d + d; }
  std::size_t readout() const { return d; }
  std::size_t total() const { return rho() + encoder() + context() + readout(); }
};

Layout layout_of(const MatcherSpec& s) { return {s.token_dim, s.latent, s.attention}; }

// Walks the flat vector block by block.
struct Cursor {
  ad::Var theta;
  Eigen::Index at = 0;

  ad::Var take(std::size_t rows, std::size_t cols) {
    ad::Var v = ad::slice(theta, at, Eigen::Index(rows), Eigen::Index(cols));
    at += Eigen::Index(rows * cols);
    return v;
  }
};

struct Dense {
  ad::Var w, b;
  ad::Var operator()(ad::Var x) const { return ad::add_bias(ad::matmul(x, w), b); }
};

Dense take_dense(Cursor& c, std::size_t in, std::size_t out) {
  Dense l;
  l.w = c.take(in, out);
  l.b = c.take(1, out);
  return l;
}

struct Weights {
  Dense rho1, rho2;
  ad::Var wq, wk, wv;
  Dense self_mix, cross_mix, ctx;
  ad::Var readout;
};

Weights unpack(const MatcherSpec& spec, ad::Var theta) {
  const std::size_t K = spec.token_dim, d = spec.latent;
  Cursor c{theta};
  Weights w;
  w.rho1 = take_dense(c, K, d);
  w.rho2 = take_dense(c, d, d);
  if (spec.attention) {
    w.wq = c.take(d, d);
    w.wk = c.take(d, d);
    w.wv = c.take(d, d);
  }
  w.self_mix = take_dense(c, 2 * d, d);
  w.cross_mix = take_dense(c, 2 * d, d);
  w.ctx = take_dense(c, 2 * d, d);
  w.readout = c.take(d, 1);
  return w;
}

ad::Var broadcast(ad::Var row, ad::Var like) { return ad::repeat_rows(row, like.rows()); }

// Zero mean, unit variance per stream. Ranks (and so hard plans) are unchanged,
// but the temperature now acts on a fixed scale.
ad::Var standardize(ad::Var v) {
  ad::Var centred = ad::add_bias(v, ad::scale(ad::mean(v), -1.0));
  ad::Var inv_std = ad::reciprocal(ad::sqrt(ad::add_scalar(ad::mean(ad::square(centred)), 1e-12)));
  return ad::scale(centred, inv_std);
}

// rho, then a residual self-mixing block whose context is the stream's own
// mean (or single-head attention over the stream).
ad::Var encode_stream(const Weights& w, const MatcherSpec& spec, ad::Var tokens) {
  ad::Var h = w.rho2(ad::gelu(w.rho1(tokens)));
  ad::Var mixed;
  if (spec.attention) {
    ad::Var q = ad::matmul(h, w.wq), k = ad::matmul(h, w.wk), v = ad::matmul(h, w.wv);
    ad::Var att = ad::row_softmax(ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(double(spec.latent))));
    mixed = ad::matmul(att, v);
  } else {
    mixed = broadcast(ad::mean_rows(h), h);
  }
  return ad::add(h, ad::gelu(w.self_mix(ad::concat_cols(h, mixed))));
}

}  // namespace

std::size_t MatcherParams::count() const { return layout_of(spec).total(); }

Vec MatcherParams::flat() const {
  Vec out(rho.size() + encoder.size() + context.size() + readout.size());
  out << rho, encoder, context, readout;
  return out;
}

void MatcherParams::assign(const Vec& theta) {
  const Layout l = layout_of(spec);
  require(std::size_t(theta.size()) == l.total(), ErrorKind::ShapeError, "matcher parameter count mismatch");
  Eigen::Index at = 0;
  auto take = [&](Vec& dst, std::size_t n) {
    dst = theta.segment(at, Eigen::Index(n));
    at += Eigen::Index(n);
  };
  take(rho, l.rho());
  take(encoder, l.encoder());
  take(context, l.context());
  take(readout, l.readout());
}

MatcherParams init_matcher(const MatcherSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t K = spec.token_dim, d = spec.latent;
  Rng rng(seed);
  std::vector<double> flat;
  auto dense = [&](std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(double(in));
    for (std::size_t k = 0; k < in * out + out; ++k) flat.push_back(rng.uniform(-bound, bound));
  };
  auto square = [&](std::size_t in) {
    const double bound = 1.0 / std::sqrt(double(in));
    for (std::size_t k = 0; k < in * in; ++k) flat.push_back(rng.uniform(-bound, bound));
  };
  dense(K, d);
  dense(d, d);
  if (spec.attention) {
    square(d);
    square(d);
    square(d);
  }
  dense(2 * d, d);
  dense(2 * d, d);
  dense(2 * d, d);
  const double bound = 1.0 / std::sqrt(double(d));
  for (std::size_t k = 0; k < d; ++k) flat.push_back(rng.uniform(-bound, bound));
  MatcherParams p;
  p.spec = spec;
  p.assign(Eigen::Map<const Vec>(flat.data(), Eigen::Index(flat.size())));
  return p;
}

ScoreVars predict_scores(const MatcherSpec& spec, ad::Var theta, const IntrinsicTokens& x, const IntrinsicTokens& y,
                         ad::Tape& tape) {
  require(x.tokens.cols() == Eigen::Index(spec.token_dim) && y.tokens.cols() == Eigen::Index(spec.token_dim),
          ErrorKind::ShapeError, "token width differs from the matcher's token_dim");
  require(std::size_t(theta.rows() * theta.cols()) == layout_of(spec).total(), ErrorKind::ShapeError,
          "matcher parameter count mismatch");
  const Weights w = unpack(spec, theta);
  ad::Var hx = encode_stream(w, spec, tape.constant(x.tokens));
  ad::Var hy = encode_stream(w, spec, tape.constant(y.tokens));
  // Cross-mixing: each stream sees the other's mean summary through the same weights.
  ad::Var sx = ad::mean_rows(hx), sy = ad::mean_rows(hy);
  ad::Var gx = ad::add(hx, ad::gelu(w.cross_mix(ad::concat_cols(hx, broadcast(sy, hx)))));
  ad::Var gy = ad::add(hy, ad::gelu(w.cross_mix(ad::concat_cols(hy, broadcast(sx, hy)))));
  // Symmetric pair context; addition commutes exactly, so swapping X and Y swaps outputs bitwise.
  ad::Var c = ad::scale(ad::add(ad::mean_rows(gx), ad::mean_rows(gy)), 0.5);
  ad::Var zx = ad::gelu(w.ctx(ad::concat_cols(gx, broadcast(c, gx))));
  ad::Var zy = ad::gelu(w.ctx(ad::concat_cols(gy, broadcast(c, gy))));
  return {standardize(ad::matmul(zx, w.readout)), standardize(ad::matmul(zy, w.readout))};
}

ScoreVars predict_scores(const MatcherParams& params, const IntrinsicTokens& x, const IntrinsicTokens& y,
                         ad::Tape& tape) {
  const Vec flat = params.flat();
  return predict_scores(params.spec, tape.leaf(Mat(Eigen::Map<const Mat>(flat.data(), flat.size(), 1))), x, y, tape);
}

std::pair<Vec, Vec> predict_score_values(const MatcherParams& params, const IntrinsicTokens& x,
                                         const IntrinsicTokens& y) {
  ad::Tape tape;
  const ScoreVars sv = predict_scores(params, x, y, tape);
  return {Vec(Eigen::Map<const Vec>(sv.s.value().data(), sv.s.rows())),
          Vec(Eigen::Map<const Vec>(sv.t.value().data(), sv.t.rows()))};
}

Coupling amortized_plan(const MatcherParams& params, const PointCloud& x, const PointCloud& y, double tau) {
  require(tau >= 0.0, ErrorKind::InvalidInput, "tau must be nonnegative");
  const std::size_t K = params.spec.token_dim;
  const auto [s, t] = predict_score_values(params, tokenize(x, K), tokenize(y, K));
  return tau == 0.0 ? hard_plan(s, t) : soft_plan(s, t, tau);
}

namespace ad {
Var fgw_loss(Var plan, const CostMatrix& cx, const CostMatrix& cy, const Mat& feat_cost, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::InvalidInput, "lambda must lie in [0, 1]");
  require(feat_cost.rows() == plan.rows() && feat_cost.cols() == plan.cols(), ErrorKind::ShapeError,
          "feature cost shape differs from the plan");
  Var structure = scale(gw_loss(plan, cx, cy), 1.0 - lambda);
  Var feature = scale(sum(hadamard(plan, plan.tape->constant(feat_cost))), lambda);
  return add(structure, feature);
}
}  // namespace ad

PairData make_pair_data(const PointCloud& x, const PointCloud& y, std::size_t k) {
  PairData p;
  p.tx = tokenize(x, k);
  p.ty = tokenize(y, k);
  p.cx = build_cost_matrix(x, CostConvention::distance);
  p.cy = build_cost_matrix(y, CostConvention::distance);
  p.feat_cost = pairwise_sq_dists(p.tx.tokens, p.ty.tokens) / double(k);
  return p;
}

ad::Var amortized_loss(const MatcherSpec& spec, ad::Var theta, const PairData& pair, double tau, double lambda,
                       ad::Tape& tape) {
  const ScoreVars sv = predict_scores(spec, theta, pair.tx, pair.ty, tape);
  return ad::fgw_loss(ad::soft_plan(sv.s, sv.t, tau), pair.cx, pair.cy, pair.feat_cost, lambda);
}

void AmortizedTrainConfig::validate() const {
  require(epochs >= 1 && batches_per_epoch >= 1 && batch_size >= 1, ErrorKind::ConfigError,
          "training needs positive epochs, batches and batch size");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::ConfigError, "lr must be positive");
  require(grad_clip > 0.0, ErrorKind::ConfigError, "grad_clip must be positive");
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::ConfigError, "lambda must lie in [0, 1]");
  anneal.validate();
}

namespace {

struct PreparedCloud {
  IntrinsicTokens tokens;
  CostMatrix cost;
};

PairData pair_from(const PreparedCloud& a, const PreparedCloud& b) {
  PairData p{a.tokens, b.tokens, a.cost, b.cost, {}};
  p.feat_cost = pairwise_sq_dists(a.tokens.tokens, b.tokens.tokens) / double(a.tokens.k);
  return p;
}

std::vector<PreparedCloud> prepare(const std::vector<LabeledCloud>& dataset, std::size_t k) {
  std::vector<PreparedCloud> out(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    out[i] = {tokenize(dataset[i].cloud, k), build_cost_matrix(dataset[i].cloud, CostConvention::distance)};
  });
  return out;
}

AmortizedTrainResult train_once(const std::vector<PreparedCloud>& prepared,
                                const std::vector<LabeledCloud>& dataset, const MatcherParams& init,
                                const AmortizedTrainConfig& cfg, double lr) {
  AmortizedTrainResult res;
  res.params = init;
  Vec theta = init.flat();
  AdamState state;
  const AdamConfig adam;
  const Rng base(cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double tau = anneal(cfg.anneal, int(std::min<std::size_t>(epoch, std::size_t(cfg.anneal.steps) - 1)));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      const auto pairs = family_pairs(dataset, cfg.batch_size, base.fork(epoch * cfg.batches_per_epoch + b).next_u64());
      std::vector<double> losses(pairs.size());
      std::vector<Vec> grads(pairs.size());
      parallel_for(pairs.size(), [&](std::size_t k) {
        const PairData pd = pair_from(prepared[pairs[k].first], prepared[pairs[k].second]);
        auto fn = [&](ad::Tape& tape, ad::Var th) { return amortized_loss(init.spec, th, pd, tau, cfg.lambda, tape); };
        std::tie(losses[k], grads[k]) = ad::value_and_grad(fn, theta);
      });
      // Fixed-order reduction keeps the update independent of the thread count.
      Vec g = Vec::Zero(theta.size());
      double loss = 0.0;
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        g += grads[k];
        loss += losses[k];
      }
      g /= double(pairs.size());
      loss /= double(pairs.size());
      require(std::isfinite(loss), ErrorKind::NumericError, "amortized loss is not finite");
      adam_step(theta, g, state, lr, cfg.grad_clip, adam);
      epoch_loss += loss / double(cfg.batches_per_epoch);
    }
    res.loss_trace.push_back(epoch_loss);
  }
  res.params.assign(theta);
  return res;
}

}  // namespace

AmortizedTrainResult train_amortized(const std::vector<LabeledCloud>& dataset, const MatcherParams& init,
                                     const AmortizedTrainConfig& cfg) {
  cfg.validate();
  require(!dataset.empty(), ErrorKind::InvalidInput, "training needs a nonempty dataset");
  const std::size_t dim = dataset.front().cloud.dim();
  for (const auto& c : dataset)
    require(c.cloud.dim() == dim, ErrorKind::ShapeError, "dataset clouds differ in ambient dimension");
  const auto prepared = prepare(dataset, init.spec.token_dim);
  try {
    return train_once(prepared, dataset, init, cfg, cfg.lr);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NumericError) throw;
  }
  try {
    AmortizedTrainResult res = train_once(prepared, dataset, init, cfg, cfg.lr / 10.0);
    res.retried = true;
    return res;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NumericError) throw;
    fail(ErrorKind::OptimizationFailure, std::string("amortized training diverged twice: ") + e.what());
  }
}

double evaluate_amortized_loss(const MatcherParams& params, const std::vector<LabeledCloud>& dataset,
                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tau,
                               double lambda) {
  require(!pairs.empty(), ErrorKind::InvalidInput, "no pairs to evaluate");
  std::vector<double> losses(pairs.size());
  const Vec theta = params.flat();
  parallel_for(pairs.size(), [&](std::size_t k) {
    const PairData pd =
        make_pair_data(dataset[pairs[k].first].cloud, dataset[pairs[k].second].cloud, params.spec.token_dim);
    ad::Tape tape;
    ad::Var th = tape.constant(Mat(Eigen::Map<const Mat>(theta.data(), theta.size(), 1)));
    losses[k] = amortized_loss(params.spec, th, pd, tau, lambda, tape).scalar();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / double(pairs.size());
}

double label_transfer_accuracy(const Mat& plan, const std::vector<int>& labels_x, const std::vector<int>& labels_y) {
  require(plan.rows() == Eigen::Index(labels_x.size()) && plan.cols() == Eigen::Index(labels_y.size()),
          ErrorKind::ShapeError, "label counts differ from the plan shape");
  const Correspondence corr = plan_to_correspondence(plan);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < corr.size(); ++i) hits += labels_y[corr[i]] == labels_x[i];
  return double(hits) / double(corr.size());
}

double random_label_baseline(const std::vector<int>& labels_x, const std::vector<int>& labels_y) {
  require(!labels_x.empty() && !labels_y.empty(), ErrorKind::InvalidInput, "empty label set");
  std::map<int, double> px, py;
  for (int l : labels_x) px[l] += 1.0 / double(labels_x.size());
  for (int l : labels_y) py[l] += 1.0 / double(labels_y.size());
  double total = 0.0;
  for (const auto& [label, p] : px)
    if (auto it = py.find(label); it != py.end()) total += p * it->second;
  return total;
}

namespace {

Eigen::Vector3d on_sphere(Rng& rng) {
  Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
  return v / v.norm();
}

// Points along a segment with a small radial jitter.
Eigen::Vector3d on_segment(Rng& rng, const Eigen::Vector3d& a, const Eigen::Vector3d& b, double radius) {
  return a + rng.uniform() * (b - a) + radius * on_sphere(rng) * rng.uniform();
}

LabeledCloud make_shape(int family, std::size_t n, Rng& rng) {
  Mat pts(Eigen::Index(n), 3);
  std::vector<int> labels(n);
  auto jitter = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  LabeledCloud out;
  // Part 1 is always the smaller one so the split is asymmetric.
  const double small = jitter(0.25, 0.35);
  const auto n1 = std::size_t(std::lround(small * double(n)));
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n1 ? 1 : 0;
  if (family == 0) {
    out.family = "dumbbell";
    const double r0 = jitter(0.9, 1.1), r1 = jitter(0.45, 0.6), gap = jitter(2.4, 2.8);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d p = labels[i] ? Eigen::Vector3d(Eigen::Vector3d(gap, 0, 0) + r1 * on_sphere(rng))
                                          : Eigen::Vector3d(r0 * on_sphere(rng));
      pts.row(Eigen::Index(i)) = p.transpose();
    }
  } else if (family == 1) {
    out.family = "l_shape";
    const double long_arm = jitter(2.0, 2.4), short_arm = jitter(0.9, 1.2), w = 0.15;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d p = labels[i] ? on_segment(rng, {0, 0.3, 0}, {0, short_arm, 0}, w)
                                          : on_segment(rng, {0, 0, 0}, {long_arm, 0, 0}, w);
      pts.row(Eigen::Index(i)) = p.transpose();
    }
  } else {
    out.family = "tripod";
    const double body = jitter(0.8, 1.0), leg = jitter(1.2, 1.5);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Vector3d p;
      if (labels[i]) {
        const double ang = 2.0 * std::numbers::pi * double(i % 3) / 3.0;
        const Eigen::Vector3d foot(leg * std::cos(ang), leg * std::sin(ang), -1.0 - leg);
        p = on_segment(rng, {0, 0, -body}, foot, 0.08);
      } else {
        p = body * on_sphere(rng);
      }
      pts.row(Eigen::Index(i)) = p.transpose();
    }
  }
  const RigidTransform g = sample_rigid(3, rng.next_u64());
  out.cloud = PointCloud(RigidTransform{g.rotation, Vec::Zero(3)}.apply(normalize_cloud(PointCloud(pts)).points()));
  out.labels = std::move(labels);
  return out;
}

}  // namespace

std::vector<LabeledCloud> synthetic_shapes(std::size_t count, std::uint64_t seed, const std::vector<std::size_t>& sizes) {
  require(!sizes.empty(), ErrorKind::InvalidInput, "need at least one cloud size");
  Rng rng(seed);
  std::vector<LabeledCloud> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t n = sizes[std::size_t(rng.below(sizes.size()))];
    Rng shape_rng = rng.fork(k);
    out.push_back(make_shape(int(k % 3), n, shape_rng));
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> family_pairs(const std::vector<LabeledCloud>& dataset,
                                                              std::size_t count, std::uint64_t seed) {
  require(!dataset.empty(), ErrorKind::InvalidInput, "no clouds to pair");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset[i].family].push_back(i);
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t a = std::size_t(rng.below(dataset.size()));
    const auto& group = groups[dataset[a].family];
    out.push_back({a, group[std::size_t(rng.below(group.size()))]});
  }
  return out;
}

std::filesystem::path label_sidecar(const std::filesystem::path& npy_path) {
  std::filesystem::path p = npy_path;
  return p.replace_extension(".labels");
}

void save_labeled(const std::filesystem::path& npy_path, const LabeledCloud& c) {
  write_npy(npy_path, c.cloud.points());
  std::ofstream out(label_sidecar(npy_path));
  if (!out) fail(ErrorKind::IoError, "cannot write " + label_sidecar(npy_path).string());
  for (int l : c.labels) out << l << '\n';
}

LabeledCloud load_labeled(const std::filesystem::path& npy_path) {
  LabeledCloud c;
  c.cloud = PointCloud(read_npy(npy_path));
  const auto side = label_sidecar(npy_path);
  std::ifstream in(side);
  if (!in) fail(ErrorKind::IoError, "cannot open " + side.string());
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      c.labels.push_back(std::stoi(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, side.string() + ": line " + std::to_string(ln) + ": bad label '" + line + "'");
    }
  }
  require(c.labels.size() == c.cloud.size(), ErrorKind::ParseError,
          side.string() + ": " + std::to_string(c.labels.size()) + " labels for " + std::to_string(c.cloud.size()) +
              " points");
  return c;
}

}  // namespace gsgw
