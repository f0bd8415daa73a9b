#include "reftrack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace reftrack {

namespace {

thread_local bool g_grad_enabled = true;

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension in " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

ImplPtr make_impl(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(n, 0.0);
  impl->requires_grad = requires_grad;
  return impl;
}

bool want_grad(const Tensor& t) { return g_grad_enabled && t.requires_grad(); }

// Attaches a tape node when any input needs gradient.
Tensor make_result(Shape shape, std::initializer_list<Tensor> parents,
                   std::function<void(TensorImpl&)> backward_fn) {
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || want_grad(p);
  auto impl = make_impl(std::move(shape), rg);
  if (rg) {
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

Tensor make_result(Shape shape, const std::vector<Tensor>& parents,
                   std::function<void(TensorImpl&)> backward_fn) {
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || want_grad(p);
  auto impl = make_impl(std::move(shape), rg);
  if (rg) {
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_2d(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_impl(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data(), t.data() + t.numel(), value);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: data size " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("tensor: empty");
  return impl_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

std::size_t Tensor::numel() const { return impl_ ? impl_->numel() : 0; }

double* Tensor::data() {
  if (!impl_) throw std::logic_error("tensor: empty");
  return impl_->data.data();
}

const double* Tensor::data() const {
  if (!impl_) throw std::logic_error("tensor: empty");
  return impl_->data.data();
}

double Tensor::value() const {
  if (numel() != 1) {
    throw std::logic_error("tensor: value() requires a scalar, got " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) throw std::invalid_argument("tensor: index rank mismatch");
  std::size_t flat = 0;
  std::size_t i = 0;
  for (int v : idx) {
    if (v < 0 || v >= s[i]) throw std::out_of_range("tensor: index out of range");
    flat = flat * static_cast<std::size_t>(s[i]) + static_cast<std::size_t>(v);
    ++i;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::is_leaf() const { return impl_ && !impl_->backward_fn; }

double* Tensor::grad() {
  if (!impl_ || !impl_->requires_grad) return nullptr;
  impl_->ensure_grad();
  return impl_->grad.data();
}

const double* Tensor::grad() const {
  if (!impl_ || impl_->grad.size() != impl_->data.size()) return nullptr;
  return impl_->grad.data();
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detached() const {
  if (!impl_) return Tensor();
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
  if (!loss.valid() || loss.numel() != 1) {
    throw std::logic_error("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) return;

  // iterative post-order topo sort
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(loss.impl().get(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // interior grads are per-call scratch; leaves accumulate across calls
  for (TensorImpl* node : order) {
    node->ensure_grad();
    if (node->backward_fn) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  }
  loss.impl()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace {

template <typename FwdFn>
Tensor pointwise(const Tensor& a, FwdFn f) {
  // f(x, &dydx) -> y; dydx may be null when no gradient is needed
  bool rg = want_grad(a);
  auto deriv = std::make_shared<std::vector<double>>();
  if (rg) deriv->resize(a.numel());
  Tensor out = make_result(a.shape(), {a}, [deriv](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const std::vector<double>& dw = *deriv;
    for (std::size_t i = 0; i < o.numel(); ++i) pa.grad[i] += o.grad[i] * dw[i];
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = 0.0;
    y[i] = f(x[i], d);
    if (rg) (*deriv)[i] = d;
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    for (int pi = 0; pi < 2; ++pi) {
      TensorImpl& p = *o.parents[static_cast<std::size_t>(pi)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) p.grad[i] += o.grad[i];
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xa[i] + xb[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pa.grad[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pb.grad[i] -= o.grad[i];
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xa[i] - xb[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pa.grad[i] += o.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pb.grad[i] += o.grad[i] * pa.data[i];
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xa[i] * xb[i];
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pa.grad[i] += o.grad[i] / pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) {
        pb.grad[i] -= o.grad[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
      }
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = xa[i] / xb[i];
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  return pointwise(a, [s](double x, double& d) {
    d = 1.0;
    return x + s;
  });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return pointwise(a, [s](double x, double& d) {
    d = s;
    return x * s;
  });
}

Tensor relu(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    d = x > 0.0 ? 1.0 : 0.0;
    return x > 0.0 ? x : 0.0;
  });
}

Tensor sigmoid(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    d = y * (1.0 - y);
    return y;
  });
}

Tensor softplus(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    double y = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    d = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return y;
  });
}

Tensor log(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    d = 1.0 / x;
    return std::log(x);
  });
}

Tensor sin(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    d = std::cos(x);
    return std::sin(x);
  });
}

Tensor cos(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    d = -std::sin(x);
    return std::cos(x);
  });
}

Tensor abs(const Tensor& a) {
  return pointwise(a, [](double x, double& d) {
    d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    return std::abs(x);
  });
}

Tensor min_elem(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "min_elem");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    for (std::size_t i = 0; i < o.numel(); ++i) {
      bool take_a = pa.data[i] <= pb.data[i];
      TensorImpl& p = take_a ? pa : pb;
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad[i] += o.grad[i];
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = std::min(xa[i], xb[i]);
  return out;
}

Tensor max_elem(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_elem");
  Tensor out = make_result(a.shape(), {a, b}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    for (std::size_t i = 0; i < o.numel(); ++i) {
      bool take_a = pa.data[i] >= pb.data[i];
      TensorImpl& p = take_a ? pa : pb;
      if (!p.requires_grad) continue;
      p.ensure_grad();
      p.grad[i] += o.grad[i];
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) y[i] = std::max(xa[i], xb[i]);
  return out;
}

Tensor clamp_min(const Tensor& a, double floor) {
  return pointwise(a, [floor](double x, double& d) {
    d = x > floor ? 1.0 : 0.0;
    return x > floor ? x : floor;
  });
}

Tensor logit(const Tensor& a, double eps) {
  return pointwise(a, [eps](double x, double& d) {
    double p = std::clamp(x, eps, 1.0 - eps);
    d = (x > eps && x < 1.0 - eps) ? 1.0 / (p * (1.0 - p)) : 0.0;
    return std::log(p / (1.0 - p));
  });
}

// ---------------------------------------------------------------------------
// shape and reduction ops

Tensor sum(const Tensor& a) {
  Tensor out = make_result({1}, {a}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < pa.numel(); ++i) pa.grad[i] += o.grad[0];
  });
  double acc = 0.0;
  const double* x = a.data();
  for (std::size_t i = 0; i < a.numel(); ++i) acc += x[i];
  out.data()[0] = acc;
  return out;
}

Tensor mean_rows(const Tensor& a) {
  check_2d(a, "mean_rows");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  Tensor out = make_result({cols}, {a}, [rows, cols](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const double inv = 1.0 / rows;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        pa.grad[static_cast<std::size_t>(r) * cols + c] += o.grad[static_cast<std::size_t>(c)] * inv;
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < rows; ++r) acc += x[static_cast<std::size_t>(r) * cols + c];
    y[c] = acc / rows;
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) +
                                " -> " + shape_str(shape));
  }
  Tensor out = make_result(std::move(shape), {a}, [](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t i = 0; i < o.numel(); ++i) pa.grad[i] += o.grad[i];
  });
  std::copy(a.data(), a.data() + a.numel(), out.data());
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  Tensor out = make_result({cols, rows}, {a}, [rows, cols](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        pa.grad[static_cast<std::size_t>(r) * cols + c] +=
            o.grad[static_cast<std::size_t>(c) * rows + r];
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      y[static_cast<std::size_t>(c) * rows + r] = x[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return out;
}

Tensor slice_rows(const Tensor& a, int begin, int count) {
  check_2d(a, "slice_rows");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  if (begin < 0 || count <= 0 || begin + count > rows) {
    throw std::invalid_argument("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") of " + shape_str(a.shape()));
  }
  Tensor out = make_result({count, cols}, {a}, [begin, cols, count](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    const std::size_t off = static_cast<std::size_t>(begin) * cols;
    for (std::size_t i = 0; i < static_cast<std::size_t>(count) * cols; ++i) {
      pa.grad[off + i] += o.grad[i];
    }
  });
  std::copy(a.data() + static_cast<std::size_t>(begin) * cols,
            a.data() + static_cast<std::size_t>(begin + count) * cols, out.data());
  return out;
}

Tensor slice_cols(const Tensor& a, int begin, int count) {
  check_2d(a, "slice_cols");
  const int rows = a.dim(0);
  const int cols = a.dim(1);
  if (begin < 0 || count <= 0 || begin + count > cols) {
    throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") of " + shape_str(a.shape()));
  }
  Tensor out = make_result({rows, count}, {a}, [begin, rows, cols, count](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < count; ++c) {
        pa.grad[static_cast<std::size_t>(r) * cols + begin + c] +=
            o.grad[static_cast<std::size_t>(r) * count + c];
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < count; ++c) {
      y[static_cast<std::size_t>(r) * count + c] = x[static_cast<std::size_t>(r) * cols + begin + c];
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
  check_2d(a, "gather_rows");
  const int nrows = a.dim(0);
  const int cols = a.dim(1);
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty index list");
  for (int r : rows) {
    if (r < 0 || r >= nrows) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(r) + " out of " +
                                  shape_str(a.shape()));
    }
  }
  Tensor out = make_result({static_cast<int>(rows.size()), cols}, {a},
                           [rows, cols](TensorImpl& o) {
                             TensorImpl& pa = *o.parents[0];
                             if (!pa.requires_grad) return;
                             pa.ensure_grad();
                             for (std::size_t i = 0; i < rows.size(); ++i) {
                               const std::size_t src = i * cols;
                               const std::size_t dst = static_cast<std::size_t>(rows[i]) * cols;
                               for (int c = 0; c < cols; ++c) pa.grad[dst + c] += o.grad[src + c];
                             }
                           });
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x + static_cast<std::size_t>(rows[i]) * cols,
              x + static_cast<std::size_t>(rows[i] + 1) * cols, y + i * cols);
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int cols = parts[0].dim(1);
  int rows = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_rows");
    if (p.dim(1) != cols) {
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  Tensor out = make_result({rows, cols}, parents, [cols](TensorImpl& o) {
    std::size_t off = 0;
    for (auto& pp : o.parents) {
      TensorImpl& p = *pp;
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t i = 0; i < p.numel(); ++i) p.grad[i] += o.grad[off + i];
      }
      off += p.numel();
    }
  });
  double* y = out.data();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), y + off);
    off += p.numel();
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int rows = parts[0].dim(0);
  int cols = 0;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.dim(0) != rows) {
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  Tensor out = make_result({rows, cols}, parents, [rows, cols, widths](TensorImpl& o) {
    int col_off = 0;
    for (std::size_t pi = 0; pi < o.parents.size(); ++pi) {
      TensorImpl& p = *o.parents[pi];
      const int w = widths[pi];
      if (p.requires_grad) {
        p.ensure_grad();
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < w; ++c) {
            p.grad[static_cast<std::size_t>(r) * w + c] +=
                o.grad[static_cast<std::size_t>(r) * cols + col_off + c];
          }
        }
      }
      col_off += w;
    }
  });
  double* y = out.data();
  int col_off = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    const double* x = p.data();
    for (int r = 0; r < rows; ++r) {
      std::copy(x + static_cast<std::size_t>(r) * w, x + static_cast<std::size_t>(r + 1) * w,
                y + static_cast<std::size_t>(r) * cols + col_off);
    }
    col_off += w;
  }
  return out;
}

Tensor add_rows(const Tensor& m, const Tensor& v) {
  check_2d(m, "add_rows");
  if (v.rank() != 1 || v.dim(0) != m.dim(1)) {
    throw std::invalid_argument("add_rows: vector " + shape_str(v.shape()) +
                                " does not match matrix " + shape_str(m.shape()));
  }
  const int rows = m.dim(0);
  const int cols = m.dim(1);
  Tensor out = make_result(m.shape(), {m, v}, [rows, cols](TensorImpl& o) {
    TensorImpl& pm = *o.parents[0];
    TensorImpl& pv = *o.parents[1];
    if (pm.requires_grad) {
      pm.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) pm.grad[i] += o.grad[i];
    }
    if (pv.requires_grad) {
      pv.ensure_grad();
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          pv.grad[static_cast<std::size_t>(c)] += o.grad[static_cast<std::size_t>(r) * cols + c];
        }
      }
    }
  });
  const double* xm = m.data();
  const double* xv = v.data();
  double* y = out.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      y[static_cast<std::size_t>(r) * cols + c] = xm[static_cast<std::size_t>(r) * cols + c] + xv[c];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra / nn primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_result({m, n}, {a, b}, [m, k, n](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    TensorImpl& pb = *o.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();  // dA = dY * B^T
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          const double g = o.grad[static_cast<std::size_t>(i) * n + j];
          if (g == 0.0) continue;
          for (int t = 0; t < k; ++t) {
            pa.grad[static_cast<std::size_t>(i) * k + t] +=
                g * pb.data[static_cast<std::size_t>(t) * n + j];
          }
        }
      }
    }
    if (pb.requires_grad) {
      pb.ensure_grad();  // dB = A^T * dY
      for (int i = 0; i < m; ++i) {
        for (int t = 0; t < k; ++t) {
          const double av = pa.data[static_cast<std::size_t>(i) * k + t];
          if (av == 0.0) continue;
          for (int j = 0; j < n; ++j) {
            pb.grad[static_cast<std::size_t>(t) * n + j] +=
                av * o.grad[static_cast<std::size_t>(i) * n + j];
          }
        }
      }
    }
  });
  const double* xa = a.data();
  const double* xb = b.data();
  double* y = out.data();
  for (int i = 0; i < m; ++i) {
    for (int t = 0; t < k; ++t) {
      const double av = xa[static_cast<std::size_t>(i) * k + t];
      if (av == 0.0) continue;
      const double* brow = xb + static_cast<std::size_t>(t) * n;
      double* yrow = y + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for " +
                                shape_str(s));
  }
  std::size_t inner = 1, outer = 1;
  for (int i = axis + 1; i < a.rank(); ++i) inner *= static_cast<std::size_t>(s[i]);
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s[i]);
  const std::size_t n = static_cast<std::size_t>(s[axis]);

  Tensor out = make_result(s, {a}, [inner, outer, n](TensorImpl& o) {
    TensorImpl& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    pa.ensure_grad();
    for (std::size_t ou = 0; ou < outer; ++ou) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * n * inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
          const std::size_t i = base + t * inner;
          dot += o.grad[i] * o.data[i];
        }
        for (std::size_t t = 0; t < n; ++t) {
          const std::size_t i = base + t * inner;
          pa.grad[i] += o.data[i] * (o.grad[i] - dot);
        }
      }
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t ou = 0; ou < outer; ++ou) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = ou * n * inner + in;
      double mx = x[base];
      for (std::size_t t = 1; t < n; ++t) mx = std::max(mx, x[base + t * inner]);
      double denom = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double e = std::exp(x[base + t * inner] - mx);
        y[base + t * inner] = e;
        denom += e;
      }
      for (std::size_t t = 0; t < n; ++t) y[base + t * inner] /= denom;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_2d(x, "layer_norm");
  const int rows = x.dim(0);
  const int cols = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols) {
    throw std::invalid_argument("layer_norm: gain/bias must be [" + std::to_string(cols) + "]");
  }
  auto stats = std::make_shared<std::vector<double>>();  // per row: mean, inv_std
  stats->resize(static_cast<std::size_t>(rows) * 2);
  Tensor out = make_result(x.shape(), {x, gain, bias}, [rows, cols, stats](TensorImpl& o) {
    TensorImpl& px = *o.parents[0];
    TensorImpl& pg = *o.parents[1];
    TensorImpl& pb = *o.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (pg.requires_grad) pg.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      const double mean = (*stats)[static_cast<std::size_t>(r) * 2];
      const double inv_std = (*stats)[static_cast<std::size_t>(r) * 2 + 1];
      double sum_gy = 0.0, sum_gyx = 0.0;
      for (int c = 0; c < cols; ++c) {
        const double xh = (px.data[off + c] - mean) * inv_std;
        const double gy = o.grad[off + c] * pg.data[static_cast<std::size_t>(c)];
        sum_gy += gy;
        sum_gyx += gy * xh;
        if (pg.requires_grad) pg.grad[static_cast<std::size_t>(c)] += o.grad[off + c] * xh;
        if (pb.requires_grad) pb.grad[static_cast<std::size_t>(c)] += o.grad[off + c];
      }
      if (px.requires_grad) {
        for (int c = 0; c < cols; ++c) {
          const double xh = (px.data[off + c] - mean) * inv_std;
          const double gy = o.grad[off + c] * pg.data[static_cast<std::size_t>(c)];
          px.grad[off + c] += inv_std * (gy - sum_gy / cols - xh * sum_gyx / cols);
        }
      }
    }
  });
  const double* xd = x.data();
  const double* gd = gain.data();
  const double* bd = bias.data();
  double* y = out.data();
  for (int r = 0; r < rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += xd[off + c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double dlt = xd[off + c] - mean;
      var += dlt * dlt;
    }
    var /= cols;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<std::size_t>(r) * 2] = mean;
    (*stats)[static_cast<std::size_t>(r) * 2 + 1] = inv_std;
    for (int c = 0; c < cols; ++c) {
      y[off + c] = (xd[off + c] - mean) * inv_std * gd[c] + bd[c];
    }
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  check_2d(q, "attention");
  check_2d(k, "attention");
  check_2d(v, "attention");
  const int d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d) {
    throw std::invalid_argument("attention: feature dims disagree " + shape_str(q.shape()) + ", " +
                                shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw std::invalid_argument("attention: key/value row counts disagree");
  }
  if (heads <= 0 || d % heads != 0) {
    throw std::invalid_argument("attention: dim " + std::to_string(d) +
                                " not divisible by heads " + std::to_string(heads));
  }
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor logits = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor weights = softmax(logits, 1);
    outs.push_back(matmul(weights, vh));
  }
  if (heads == 1) return outs[0];
  return concat_cols(outs);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be [H x W x C], got " + shape_str(x.shape()));
  if (w.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [kh x kw x Cin x Cout]");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int kh = w.dim(0), kw = w.dim(1), wc = w.dim(2), F = w.dim(3);
  if (wc != C) {
    throw std::invalid_argument("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != F) throw std::invalid_argument("conv2d: bias must be [Cout]");
  if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel size must be odd");
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const int Ho = (H + 2 * ph - kh) / stride + 1;
  const int Wo = (W + 2 * pw - kw) / stride + 1;

  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  Tensor out = make_result(
      {Ho, Wo, F}, {x, w, b}, [=](TensorImpl& o) {
        TensorImpl& px = *o.parents[0];
        TensorImpl& pw_ = *o.parents[1];
        TensorImpl& pb = *o.parents[2];
        if (px.requires_grad) px.ensure_grad();
        if (pw_.requires_grad) pw_.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int oy = 0; oy < Ho; ++oy) {
          for (int ox = 0; ox < Wo; ++ox) {
            const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * F;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = clampi(oy * stride - ph + ky, 0, H - 1);
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = clampi(ox * stride - pw + kx, 0, W - 1);
                const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * C;
                const std::size_t wbase = ((static_cast<std::size_t>(ky) * kw + kx) * C) * F;
                for (int c = 0; c < C; ++c) {
                  const double xv = px.data[ibase + c];
                  for (int f = 0; f < F; ++f) {
                    const double g = o.grad[obase + f];
                    if (pw_.requires_grad) pw_.grad[wbase + static_cast<std::size_t>(c) * F + f] += xv * g;
                    if (px.requires_grad) {
                      px.grad[ibase + c] += pw_.data[wbase + static_cast<std::size_t>(c) * F + f] * g;
                    }
                  }
                }
              }
            }
            if (pb.requires_grad) {
              for (int f = 0; f < F; ++f) pb.grad[static_cast<std::size_t>(f)] += o.grad[obase + f];
            }
          }
        }
      });

  const double* xd = x.data();
  const double* wd = w.data();
  const double* bd = b.data();
  double* y = out.data();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const std::size_t obase = (static_cast<std::size_t>(oy) * Wo + ox) * F;
      for (int f = 0; f < F; ++f) y[obase + f] = bd[f];
      for (int ky = 0; ky < kh; ++ky) {
        const int iy = clampi(oy * stride - ph + ky, 0, H - 1);
        for (int kx = 0; kx < kw; ++kx) {
          const int ix = clampi(ox * stride - pw + kx, 0, W - 1);
          const std::size_t ibase = (static_cast<std::size_t>(iy) * W + ix) * C;
          const std::size_t wbase = ((static_cast<std::size_t>(ky) * kw + kx) * C) * F;
          for (int c = 0; c < C; ++c) {
            const double xv = xd[ibase + c];
            if (xv == 0.0) continue;
            const double* wrow = wd + wbase + static_cast<std::size_t>(c) * F;
            for (int f = 0; f < F; ++f) y[obase + f] += xv * wrow[f];
          }
        }
      }
    }
  }
  return out;
}

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("upsample2x: input must be [h x w x C]");
  const int h = x.dim(0), w = x.dim(1), C = x.dim(2);
  const int H = 2 * h, W = 2 * w;

  struct Tap {
    int y0, y1, x0, x1;
    double wy, wx;
  };
  auto taps = std::make_shared<std::vector<Tap>>();
  taps->reserve(static_cast<std::size_t>(H) * W);
  for (int oy = 0; oy < H; ++oy) {
    const double fy = (oy + 0.5) / 2.0 - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(y0 + 1, h - 1);
    y0 = std::max(y0, 0);
    for (int ox = 0; ox < W; ++ox) {
      const double fx = (ox + 0.5) / 2.0 - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(x0 + 1, w - 1);
      x0 = std::max(x0, 0);
      taps->push_back({y0, y1, x0, x1, wy, wx});
    }
  }

  Tensor out = make_result({H, W, C}, {x}, [h, w, C, H, W, taps](TensorImpl& o) {
    TensorImpl& px = *o.parents[0];
    if (!px.requires_grad) return;
    px.ensure_grad();
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        const Tap& t = (*taps)[static_cast<std::size_t>(oy) * W + ox];
        const std::size_t obase = (static_cast<std::size_t>(oy) * W + ox) * C;
        for (int c = 0; c < C; ++c) {
          const double g = o.grad[obase + c];
          px.grad[(static_cast<std::size_t>(t.y0) * w + t.x0) * C + c] += g * (1 - t.wy) * (1 - t.wx);
          px.grad[(static_cast<std::size_t>(t.y0) * w + t.x1) * C + c] += g * (1 - t.wy) * t.wx;
          px.grad[(static_cast<std::size_t>(t.y1) * w + t.x0) * C + c] += g * t.wy * (1 - t.wx);
          px.grad[(static_cast<std::size_t>(t.y1) * w + t.x1) * C + c] += g * t.wy * t.wx;
        }
      }
    }
  });
  const double* xd = x.data();
  double* y = out.data();
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      const Tap& t = (*taps)[static_cast<std::size_t>(oy) * W + ox];
      const std::size_t obase = (static_cast<std::size_t>(oy) * W + ox) * C;
      for (int c = 0; c < C; ++c) {
        y[obase + c] = xd[(static_cast<std::size_t>(t.y0) * w + t.x0) * C + c] * (1 - t.wy) * (1 - t.wx) +
                       xd[(static_cast<std::size_t>(t.y0) * w + t.x1) * C + c] * (1 - t.wy) * t.wx +
                       xd[(static_cast<std::size_t>(t.y1) * w + t.x0) * C + c] * t.wy * (1 - t.wx) +
                       xd[(static_cast<std::size_t>(t.y1) * w + t.x1) * C + c] * t.wy * t.wx;
      }
    }
  }
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "embedding");
  const int vocab = table.dim(0);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw std::logic_error("embedding: id " + std::to_string(id) + " out of vocabulary size " +
                             std::to_string(vocab));
    }
  }
  return gather_rows(table, ids);
}

}  // namespace reftrack
