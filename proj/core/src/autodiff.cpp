#include "msan/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "msan/errors.hpp"

namespace msan::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::ArrayXd>;
using VecMap = Eigen::Map<Eigen::ArrayXd>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ConstVecMap as_array(std::span<const double> s) {
  return ConstVecMap(s.data(), static_cast<Eigen::Index>(s.size()));
}
VecMap as_array(Buffer& v) { return VecMap(v.data(), static_cast<Eigen::Index>(v.size())); }

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ArgumentError("operands live on different tapes");
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + " expects a matrix, got " + shape_string(t.dims()));
}

}  // namespace

void Parameter::zero_grad() {
  grad.assign(value.size(), 0.0);
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::add_bias: return "add_bias";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::grl: return "grl";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::mse: return "mse";
    case OpKind::sum: return "sum";
    case OpKind::add: return "add";
    case OpKind::scale: return "scale";
    case OpKind::slice_rows: return "slice_rows";
    case OpKind::concat_rows: return "concat_rows";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  Node n;
  n.kind = OpKind::input;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
  Node n;
  n.kind = OpKind::parameter;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    if (&v.tape() != this) throw ArgumentError("operand recorded on a different tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.value;
}

Buffer& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

std::span<const double> Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.param) return n.param->grad;
  if (n.grad.size() != value(id).size()) {
    if (empty_grad_.size() < value(id).size()) empty_grad_.resize(value(id).size());
    return std::span<const double>(empty_grad_).first(value(id).size());
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ArgumentError("loss lives on a different tape");
  if (loss.value().size() != 1) {
    throw ArgumentError("backward needs a scalar loss, got " + shape_string(loss.value().dims()));
  }
  for (Node& n : nodes_) n.grad.clear();
  std::fill(empty_grad_.begin(), empty_grad_.end(), 0.0);
  grad_buffer(loss.id())[0] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_string(av.dims()) + " x " + shape_string(bv.dims()));
  }
  Tensor out({av.rows(), bv.cols()});
  MatMap(out.data().data(), static_cast<Eigen::Index>(av.rows()), static_cast<Eigen::Index>(bv.cols())).noalias() =
      as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(OpKind::matmul, std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    ConstMatMap G(t.grad(self).data(), static_cast<Eigen::Index>(A.rows()), static_cast<Eigen::Index>(B.cols()));
    if (t.requires_grad(ia)) {
      MatMap dA(t.grad_buffer(ia).data(), static_cast<Eigen::Index>(A.rows()), static_cast<Eigen::Index>(A.cols()));
      dA.noalias() += G * as_matrix(B).transpose();
    }
    if (t.requires_grad(ib)) {
      MatMap dB(t.grad_buffer(ib).data(), static_cast<Eigen::Index>(B.rows()), static_cast<Eigen::Index>(B.cols()));
      dB.noalias() += as_matrix(A).transpose() * G;
    }
  });
}

Var add_bias(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "add_bias");
  if (bv.rank() != 1 || bv.size() != av.cols()) {
    throw ShapeError("add_bias shape mismatch: " + shape_string(av.dims()) + " + " + shape_string(bv.dims()));
  }
  Tensor out = av;
  const std::size_t m = av.rows(), n = av.cols();
  for (std::size_t r = 0; r < m; ++r) {
    double* row = out.data().data() + r * n;
    for (std::size_t c = 0; c < n; ++c) row[c] += bv[c];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(OpKind::add_bias, std::move(out), {a, b}, [ia, ib, m, n](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    if (t.requires_grad(ia)) as_array(t.grad_buffer(ia)) += as_array(g);
    if (t.requires_grad(ib)) {
      auto& db = t.grad_buffer(ib);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) db[c] += g[r * n + c];
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::relu, std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const auto y = t.value(self).data();
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += y[i] > 0.0 ? g[i] : 0.0;
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::tanh, std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const auto y = t.value(self).data();
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var grl(Var a, double lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("grl lambda must be non-negative, got " + std::to_string(lambda));
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::grl, a.value(), {a}, [ia, lambda](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto& da = t.grad_buffer(ia);
    const double reversed = -lambda;
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += reversed * g[i];
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_matrix(z, "softmax_cross_entropy");
  const std::size_t m = z.rows(), c = z.cols();
  if (m == 0) throw ArgumentError("softmax_cross_entropy needs at least one row");
  if (labels.size() != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(z.dims()));
  }
  std::vector<double> probs(m * c);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ArgumentError("label " + std::to_string(label) + " out of range [0, " + std::to_string(c) + ")");
    }
    const double* row = z.data().data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[r * c + k] = std::exp(row[k] - mx);
      denom += probs[r * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[r * c + k] /= denom;
    total += (mx + std::log(denom)) - row[label];
  }
  std::vector<int> saved_labels(labels.begin(), labels.end());
  const std::size_t iz = logits.id();
  return logits.tape().record(
      OpKind::softmax_cross_entropy, Tensor::scalar(total / static_cast<double>(m)), {logits},
      [iz, m, c, probs = std::move(probs), saved_labels = std::move(saved_labels)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(m);
        auto& dz = t.grad_buffer(iz);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t k = 0; k < c; ++k) dz[r * c + k] += g * probs[r * c + k];
          dz[r * c + static_cast<std::size_t>(saved_labels[r])] -= g;
        }
      });
}

Var mse(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dims() != bv.dims()) {
    throw ShapeError("mse shape mismatch: " + shape_string(av.dims()) + " vs " + shape_string(bv.dims()));
  }
  const std::size_t n = av.size();
  if (n == 0) throw ArgumentError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(OpKind::mse, Tensor::scalar(acc / static_cast<double>(n)), {a, b},
                         [ia, ib, n](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0] * 2.0 / static_cast<double>(n);
                           const auto x = t.value(ia).data();
                           const auto y = t.value(ib).data();
                           if (t.requires_grad(ia)) {
                             auto& da = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < n; ++i) da[i] += g * (x[i] - y[i]);
                           }
                           if (t.requires_grad(ib)) {
                             auto& db = t.grad_buffer(ib);
                             for (std::size_t i = 0; i < n; ++i) db[i] -= g * (x[i] - y[i]);
                           }
                         });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::sum, Tensor::scalar(acc), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& d : t.grad_buffer(ia)) d += g;
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.dims() != b.dims()) {
    throw ShapeError("add shape mismatch: " + shape_string(a.dims()) + " vs " + shape_string(b.dims()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(OpKind::add, std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    if (t.requires_grad(ia)) as_array(t.grad_buffer(ia)) += as_array(g);
    if (t.requires_grad(ib)) as_array(t.grad_buffer(ib)) += as_array(g);
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::scale, std::move(out), {a}, [ia, factor](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += factor * g[i];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_rows");
  if (begin > end || end > av.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_string(av.dims()));
  }
  const std::size_t c = av.cols();
  Buffer data(av.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           av.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::slice_rows, Tensor({end - begin, c}, std::move(data)), {a},
                         [ia, begin, c](Tape& t, std::size_t self) {
                           auto g = t.grad(self);
                           auto& da = t.grad_buffer(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) da[begin * c + i] += g[i];
                         });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  std::vector<const Tensor*> values;
  for (Var v : parts) {
    require_same_tape(parts.front(), v);
    values.push_back(&v.value());
  }
  Tensor out = msan::concat_rows(values);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (Var v : parts) {
    ids.push_back(v.id());
    offsets.push_back(off);
    off += v.value().size();
  }
  auto backward = [ids, offsets](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!t.requires_grad(ids[p])) continue;
      auto& dp = t.grad_buffer(ids[p]);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += g[offsets[p] + i];
    }
  };
  return parts.front().tape().record(OpKind::concat_rows, std::move(out), parts, std::move(backward));
}

double grl_ramp(double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  return 2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0;
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ArgumentError("grad_check step must be positive");
  std::vector<double> analytic;
  {
    Tape tape;
    Var xv = tape.input(x);
    Var y = f(tape, xv);
    tape.backward(y);
    analytic.assign(xv.grad().begin(), xv.grad().end());
  }
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    Tape tp;
    const double fp = f(tp, tp.constant(probe)).value()[0];
    probe[i] = x[i] - h;
    Tape tm;
    const double fm = f(tm, tm.constant(probe)).value()[0];
    probe[i] = x[i];
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * h)));
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params, double h) {
  if (!(h > 0.0)) throw ArgumentError("grad_check step must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&loss] {
    Tape tape;
    return loss(tape).value()[0];
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = eval();
      p->value[i] = orig - h;
      const double fm = eval();
      p->value[i] = orig;
      worst = std::max(worst, relative_error(p->grad[i], (fp - fm) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace msan::ad
