// Reverse-mode automatic differentiation over dense matrices, sized for the
// fixed refinement-policy architecture. A Tape records the forward pass and
// replays adjoints in reverse; Param leaves collect gradients per tape so
// independent tapes can run on worker threads and be merged in a fixed order.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace trussforge::ad {

using Mat = Eigen::MatrixXd;

struct Param {
  Mat value;
  Mat grad;
  Mat adam_m, adam_v;
  std::string name;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols, std::string n = {})
      : value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        adam_m(Mat::Zero(rows, cols)),
        adam_v(Mat::Zero(rows, cols)),
        name(std::move(n)) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

struct Var {
  int id = -1;
  Tape* tape = nullptr;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> backward;
  };

  Var constant(Mat m) { return push(std::move(m), false, nullptr); }

  Var leaf(Param& p, bool trainable) {
    Param* ptr = &p;
    return push(p.value, trainable, [ptr](Tape& t, const Mat& g) {
      auto [it, inserted] = t.param_grads_.try_emplace(ptr, g);
      if (!inserted) it->second += g;
    });
  }

  void backward(Var loss) {
    if (loss.value().size() != 1) throw std::logic_error("backward needs a scalar loss");
    accumulate(loss.id, Mat::Ones(1, 1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  /// Per-tape parameter gradients collected by backward(), in a
  /// deterministic order. Callers fold them into Param::grad.
  const std::map<Param*, Mat>& param_grads() const { return param_grads_; }

  void apply_param_grads(double scale = 1.0) {
    for (auto& [p, g] : param_grads_) p->grad += scale * g;
  }

  const Mat& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  void accumulate(int id, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1, this};
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::map<Param*, Mat> param_grads_;
};

inline const Mat& Var::value() const { return tape->value_of(id); }

namespace detail {
inline bool any_needs(std::initializer_list<Var> vars) {
  for (const Var& v : vars) {
    if (v.tape->needs_grad(v.id)) return true;
  }
  return false;
}
}  // namespace detail

// --------------------------------------------------------------------------
// Primitive operations. Each captures parent ids and whatever forward values
// its adjoint needs.
// --------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  Mat out = a.value() * b.value();
  if (!detail::any_needs({a, b})) return t.constant(std::move(out));
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), true, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, g * tp.value_of(ib).transpose());
    if (tp.needs_grad(ib)) tp.accumulate(ib, tp.value_of(ia).transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  Mat out = a.value() + b.value();
  if (!detail::any_needs({a, b})) return t.constant(std::move(out));
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), true, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, g);
    if (tp.needs_grad(ib)) tp.accumulate(ib, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  Mat out = a.value() - b.value();
  if (!detail::any_needs({a, b})) return t.constant(std::move(out));
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), true, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, g);
    if (tp.needs_grad(ib)) tp.accumulate(ib, -g);
  });
}

/// Broadcasts a 1 x C row vector over every row of a.
inline Var add_rowvec(Var a, Var bias) {
  Tape& t = *a.tape;
  Mat out = a.value().rowwise() + bias.value().row(0);
  if (!detail::any_needs({a, bias})) return t.constant(std::move(out));
  const int ia = a.id, ibias = bias.id;
  return t.push(std::move(out), true, [ia, ibias](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, g);
    if (tp.needs_grad(ibias)) tp.accumulate(ibias, g.colwise().sum());
  });
}

inline Var cmul(Var a, Var b) {
  Tape& t = *a.tape;
  Mat out = a.value().cwiseProduct(b.value());
  if (!detail::any_needs({a, b})) return t.constant(std::move(out));
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), true, [ia, ib](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value_of(ib)));
    if (tp.needs_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value_of(ia)));
  });
}

/// Elementwise k * a + c.
inline Var affine(Var a, double k, double c) {
  Tape& t = *a.tape;
  Mat out = (k * a.value()).array() + c;
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true,
                [ia, k](Tape& tp, const Mat& g) { tp.accumulate(ia, k * g); });
}

inline Var tanh_op(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().array().tanh();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  Mat y = out;
  return t.push(std::move(out), true, [ia, y](Tape& tp, const Mat& g) {
    tp.accumulate(ia, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().cwiseMax(0.0);
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true, [ia](Tape& tp, const Mat& g) {
    const Mat mask = (tp.value_of(ia).array() > 0.0).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(mask));
  });
}

inline Var exp_op(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().array().exp();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  Mat y = out;
  return t.push(std::move(out), true, [ia, y](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(y));
  });
}

inline Var log_op(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().array().log();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true, [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseQuotient(tp.value_of(ia)));
  });
}

inline Var square(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().array().square();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true, [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, (2.0 * g.array() * tp.value_of(ia).array()).matrix());
  });
}

/// Hard clamp; the adjoint passes only strictly inside the range.
inline Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Mat out = a.value().cwiseMax(lo).cwiseMin(hi);
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true, [ia, lo, hi](Tape& tp, const Mat& g) {
    const auto& x = tp.value_of(ia).array();
    const Mat mask = ((x > lo) && (x < hi)).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(mask));
  });
}

/// Elementwise minimum; ties route the adjoint to a.
inline Var minimum(Var a, Var b) {
  Tape& t = *a.tape;
  Mat out = a.value().cwiseMin(b.value());
  if (!detail::any_needs({a, b})) return t.constant(std::move(out));
  const int ia = a.id, ib = b.id;
  return t.push(std::move(out), true, [ia, ib](Tape& tp, const Mat& g) {
    const Mat take_a = (tp.value_of(ia).array() <= tp.value_of(ib).array()).cast<double>();
    if (tp.needs_grad(ia)) tp.accumulate(ia, g.cwiseProduct(take_a));
    if (tp.needs_grad(ib)) {
      tp.accumulate(ib, g.cwiseProduct((1.0 - take_a.array()).matrix()));
    }
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value().transpose();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  return t.push(std::move(out), true,
                [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, g.transpose()); });
}

inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double mx = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  Mat y = out;
  return t.push(std::move(out), true, [ia, y](Tape& tp, const Mat& g) {
    Mat dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct(g.row(r) -
                                        Eigen::RowVectorXd::Constant(y.cols(), dot));
    }
    tp.accumulate(ia, dx);
  });
}

/// Row-wise layer normalization with learned gain and bias (1 x C each).
inline Var layernorm_rows(Var a, Var gain, Var bias, double eps = 1e-5) {
  Tape& t = *a.tape;
  const Mat& x = a.value();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
            bias.value().row(0).array();
  if (!detail::any_needs({a, gain, bias})) return t.constant(std::move(out));
  const int ia = a.id, ig = gain.id, ibias = bias.id;
  return t.push(std::move(out), true,
                [ia, ig, ibias, xhat, inv_std](Tape& tp, const Mat& g) {
    if (tp.needs_grad(ig)) {
      tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
    }
    if (tp.needs_grad(ibias)) tp.accumulate(ibias, g.colwise().sum());
    if (tp.needs_grad(ia)) {
      const Eigen::RowVectorXd gain_row = tp.value_of(ig).row(0);
      Mat dx(xhat.rows(), xhat.cols());
      const double n = static_cast<double>(xhat.cols());
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gain_row);
        const double mean_dxhat = dxhat.mean();
        const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(r)).sum() / n;
        dx.row(r) = (dxhat.array() - mean_dxhat -
                     xhat.row(r).array() * mean_dxhat_xhat) *
                    inv_std(r);
      }
      tp.accumulate(ia, dx);
    }
  });
}

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index count) {
  Tape& t = *a.tape;
  Mat out = a.value().middleRows(r0, count);
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  const Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  return t.push(std::move(out), true, [ia, r0, count, rows, cols](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(rows, cols);
    full.middleRows(r0, count) = g;
    tp.accumulate(ia, full);
  });
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index count) {
  Tape& t = *a.tape;
  Mat out = a.value().middleCols(c0, count);
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  const Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  return t.push(std::move(out), true, [ia, c0, count, rows, cols](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(rows, cols);
    full.middleCols(c0, count) = g;
    tp.accumulate(ia, full);
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape;
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) rows += p.rows();
  Mat out(rows, cols);
  Eigen::Index at = 0;
  bool needs = false;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.push_back({p.id, {at, p.rows()}});
    needs = needs || t.needs_grad(p.id);
    at += p.rows();
  }
  if (!needs) return t.constant(std::move(out));
  return t.push(std::move(out), true, [spans](Tape& tp, const Mat& g) {
    for (const auto& [id, span] : spans) {
      if (tp.needs_grad(id)) tp.accumulate(id, g.middleRows(span.first, span.second));
    }
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  Tape& t = *parts.front().tape;
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) cols += p.cols();
  Mat out(rows, cols);
  Eigen::Index at = 0;
  bool needs = false;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.push_back({p.id, {at, p.cols()}});
    needs = needs || t.needs_grad(p.id);
    at += p.cols();
  }
  if (!needs) return t.constant(std::move(out));
  return t.push(std::move(out), true, [spans](Tape& tp, const Mat& g) {
    for (const auto& [id, span] : spans) {
      if (tp.needs_grad(id)) tp.accumulate(id, g.middleCols(span.first, span.second));
    }
  });
}

inline Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  if (!t.needs_grad(a.id)) return t.constant(std::move(out));
  const int ia = a.id;
  const Eigen::Index rows = a.value().rows(), cols = a.value().cols();
  return t.push(std::move(out), true, [ia, rows, cols](Tape& tp, const Mat& g) {
    tp.accumulate(ia, Mat::Constant(rows, cols, g(0, 0)));
  });
}

inline Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return affine(sum_all(a), 1.0 / n, 0.0);
}

// --------------------------------------------------------------------------
// Adam optimizer with bias correction.
// --------------------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Param* p : params) {
      p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * p->grad;
      p->adam_v = beta2_ * p->adam_v +
                  (1.0 - beta2_) * p->grad.cwiseProduct(p->grad).eval();
      const Mat mhat = p->adam_m / bc1;
      const Mat vhat = p->adam_v / bc2;
      p->value -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace trussforge::ad
