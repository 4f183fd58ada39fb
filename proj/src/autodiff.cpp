#include "gsgw/autodiff.hpp"

#include "gsgw/errors.hpp"

#include <cmath>
#include <numbers>

namespace gsgw::ad {

const Mat& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Mat& v = value();
  require(v.rows() == 1 && v.cols() == 1, ErrorKind::ShapeError, "expected a 1x1 node");
  return v(0, 0);
}

Var Tape::leaf(Mat value, bool requires_grad) {
  require(value.allFinite(), ErrorKind::NumericError, "leaf value is not finite");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::push(Mat value, const char* op, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (!value.allFinite()) fail(ErrorKind::NumericError, std::string("op '") + op + "' produced a non-finite value");
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Mat& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var output) {
  require(output.tape == this, ErrorKind::InvalidInput, "output belongs to another tape");
  const Mat& out = nodes_[output.id].value;
  require(out.rows() == 1 && out.cols() == 1, ErrorKind::InvalidInput, "backward needs a scalar output");
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  accumulate(output.id, Mat::Ones(1, 1));
  for (std::size_t k = output.id + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (!node.has_grad || !node.backward) continue;
    // The closure may append to other nodes' gradients but never to node k.
    const Mat g = node.grad;
    node.backward(g, *this);
  }
}

Mat Tape::grad(Var v) const {
  const Node& node = nodes_[v.id];
  if (!node.has_grad) return Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

namespace {

void same_shape(Var a, Var b, const char* op) {
  require(a.tape == b.tape, ErrorKind::InvalidInput, std::string(op) + ": operands on different tapes");
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::ShapeError,
          std::string(op) + ": shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " differ");
}

template <typename F, typename DF>
Var unary(Var a, const char* op, F f, DF df) {
  Mat out = a.value().unaryExpr(f);
  const std::size_t ia = a.id;
  return a.tape->push(std::move(out), op, {ia}, [ia, df](const Mat& g, Tape& t) {
    const Mat& x = t.value(ia);
    Mat d(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) d.data()[k] = g.data()[k] * df(x.data()[k]);
    t.accumulate(ia, d);
  });
}

constexpr double kGeluC = 0.044715;
const double kGeluK = std::sqrt(2.0 / std::numbers::pi);

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  require(a.tape == b.tape, ErrorKind::InvalidInput, "matmul: operands on different tapes");
  require(a.cols() == b.rows(), ErrorKind::ShapeError,
          "matmul: inner dimensions " + std::to_string(a.cols()) + " and " + std::to_string(b.rows()));
  Mat out = a.value() * b.value();
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return a.tape->push(std::move(out), "matmul", {ia, ib}, [ia, ib](const Mat& g, Tape& t) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return a.tape->push(a.value() + b.value(), "add", {ia, ib}, [ia, ib](const Mat& g, Tape& t) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return a.tape->push(a.value() - b.value(), "sub", {ia, ib}, [ia, ib](const Mat& g, Tape& t) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var hadamard(Var a, Var b) {
  same_shape(a, b, "hadamard");
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), "hadamard", {ia, ib}, [ia, ib](const Mat& g, Tape& t) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double c) {
  const std::size_t ia = a.id;
  return a.tape->push(a.value() * c, "scale", {ia}, [ia, c](const Mat& g, Tape& t) { t.accumulate(ia, g * c); });
}

Var scale(Var a, Var c) {
  require(a.tape == c.tape, ErrorKind::InvalidInput, "scale: operands on different tapes");
  require(c.rows() == 1 && c.cols() == 1, ErrorKind::ShapeError, "scale: factor must be 1x1");
  const std::size_t ia = a.id;
  const std::size_t ic = c.id;
  return a.tape->push(a.value() * c.scalar(), "scale_var", {ia, ic}, [ia, ic](const Mat& g, Tape& t) {
    const double cv = t.value(ic)(0, 0);
    if (t.requires_grad(ia)) t.accumulate(ia, g * cv);
    if (t.requires_grad(ic)) t.accumulate(ic, Mat::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
  });
}

Var add_scalar(Var a, double c) {
  const std::size_t ia = a.id;
  return a.tape->push(a.value().array() + c, "add_scalar", {ia}, [ia](const Mat& g, Tape& t) { t.accumulate(ia, g); });
}

Var add_bias(Var a, Var row) {
  require(a.tape == row.tape, ErrorKind::InvalidInput, "add_bias: operands on different tapes");
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorKind::ShapeError, "add_bias: bias must be 1 x cols");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  const std::size_t ia = a.id;
  const std::size_t ib = row.id;
  return a.tape->push(std::move(out), "add_bias", {ia, ib}, [ia, ib](const Mat& g, Tape& t) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id;
  return a.tape->push(a.value().transpose(), "transpose", {ia},
                      [ia](const Mat& g, Tape& t) { t.accumulate(ia, g.transpose()); });
}

Var row_softmax(Var a) {
  const Mat& x = a.value();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - mx).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const std::size_t ia = a.id;
  const std::size_t iy = a.tape->size();
  return a.tape->push(std::move(y), "row_softmax", {ia}, [iy, ia](const Mat& g, Tape& t) {
    const Mat& y = t.value(iy);
    Mat d = y.cwiseProduct(g);
    const Vec dots = d.rowwise().sum();
    d -= y.cwiseProduct(dots.replicate(1, y.cols()));
    t.accumulate(ia, d);
  });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", [](double x) { return stable_sigmoid(x); },
               [](double x) {
                 const double s = stable_sigmoid(x);
                 return s * (1.0 - s);
               });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double x) {
                 const double th = std::tanh(x);
                 return 1.0 - th * th;
               });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return unary(
      a, "gelu",
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x))); },
      [](double x) {
        const double th = std::tanh(kGeluK * (x + kGeluC * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
      });
}

Var sin(Var a) {
  return unary(a, "sin", [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, "cos", [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Var square(Var a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt(Var a) {
  require((a.value().array() >= 0.0).all(), ErrorKind::NumericError, "sqrt of a negative value");
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var reciprocal(Var a) {
  return unary(a, "reciprocal", [](double x) { return 1.0 / x; }, [](double x) { return -1.0 / (x * x); });
}

Var sum(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  return a.tape->push(Mat::Constant(1, 1, a.value().sum()), "sum", {ia},
                      [ia, r, c](const Mat& g, Tape& t) { t.accumulate(ia, Mat::Constant(r, c, g(0, 0))); });
}

Var mean(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index r = a.rows();
  const Eigen::Index c = a.cols();
  const double inv = 1.0 / static_cast<double>(r * c);
  return a.tape->push(Mat::Constant(1, 1, a.value().sum() * inv), "mean", {ia},
                      [ia, r, c, inv](const Mat& g, Tape& t) { t.accumulate(ia, Mat::Constant(r, c, g(0, 0) * inv)); });
}

Var mean_rows(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index r = a.rows();
  const double inv = 1.0 / static_cast<double>(r);
  Mat out = a.value().colwise().sum() * inv;
  return a.tape->push(std::move(out), "mean_rows", {ia},
                      [ia, r, inv](const Mat& g, Tape& t) { t.accumulate(ia, (g * inv).replicate(r, 1)); });
}

Var sum_cols(Var a) {
  const std::size_t ia = a.id;
  const Eigen::Index c = a.cols();
  Mat out = a.value().rowwise().sum();
  return a.tape->push(std::move(out), "sum_cols", {ia},
                      [ia, c](const Mat& g, Tape& t) { t.accumulate(ia, g.replicate(1, c)); });
}

Var repeat_rows(Var row, Eigen::Index r) {
  require(row.rows() == 1, ErrorKind::ShapeError, "repeat_rows expects a single row");
  const std::size_t ia = row.id;
  return row.tape->push(row.value().replicate(r, 1), "repeat_rows", {ia},
                        [ia](const Mat& g, Tape& t) { t.accumulate(ia, g.colwise().sum()); });
}

Var concat_cols(Var a, Var b) {
  require(a.tape == b.tape, ErrorKind::InvalidInput, "concat: operands on different tapes");
  require(a.rows() == b.rows(), ErrorKind::ShapeError, "concat: row counts differ");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return a.tape->push(std::move(out), "concat", {ia, ib}, [ia, ib, ca, cb](const Mat& g, Tape& t) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.leftCols(ca));
    if (t.requires_grad(ib)) t.accumulate(ib, g.rightCols(cb));
  });
}

Var slice(Var a, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  require(offset >= 0 && rows >= 0 && cols >= 0 && offset + rows * cols <= a.value().size(), ErrorKind::ShapeError,
          "slice out of range");
  Mat out = Eigen::Map<const Mat>(a.value().data() + offset, rows, cols);
  const std::size_t ia = a.id;
  const Eigen::Index r0 = a.rows();
  const Eigen::Index c0 = a.cols();
  return a.tape->push(std::move(out), "slice", {ia}, [ia, r0, c0, offset, rows, cols](const Mat& g, Tape& t) {
    Mat d = Mat::Zero(r0, c0);
    Eigen::Map<Mat>(d.data() + offset, rows, cols) = g;
    t.accumulate(ia, d);
  });
}

Var activate(Var a, Activation act) {
  switch (act) {
    case Activation::relu: return relu(a);
    case Activation::gelu: return gelu(a);
    case Activation::tanh: return tanh(a);
  }
  return a;
}

std::pair<double, Vec> value_and_grad(const TapeFn& fn, const Vec& theta) {
  Tape tape;
  Var th = tape.leaf(Mat(Eigen::Map<const Mat>(theta.data(), theta.size(), 1)));
  Var out = fn(tape, th);
  tape.backward(out);
  const Mat g = tape.grad(th);
  return {out.scalar(), Vec(Eigen::Map<const Vec>(g.data(), g.size()))};
}

double grad_check(const TapeFn& fn, const Vec& theta, double h) {
  require(h >= 1e-7 && h <= 1e-3, ErrorKind::InvalidInput, "grad_check step must lie in [1e-7, 1e-3]");
  const auto [f0, analytic] = value_and_grad(fn, theta);
  require(std::isfinite(f0), ErrorKind::NumericError, "function value is not finite");
  auto eval = [&](const Vec& th) {
    Tape tape;
    Var v = tape.constant(Mat(Eigen::Map<const Mat>(th.data(), th.size(), 1)));
    const double f = fn(tape, v).scalar();
    require(std::isfinite(f), ErrorKind::NumericError, "function value is not finite");
    return f;
  };
  double worst = 0.0;
  Vec probe = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    probe(k) = theta(k) + h;
    const double fp = eval(probe);
    probe(k) = theta(k) - h;
    const double fm = eval(probe);
    probe(k) = theta(k);
    const double central = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic(k) - central) / (1e-8 + std::abs(central)));
  }
  return worst;
}

}  // namespace gsgw::ad
