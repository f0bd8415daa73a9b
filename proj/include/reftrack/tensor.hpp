#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace reftrack {

using Shape = std::vector<int>;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // same size as data once materialized
  bool requires_grad = false;

  // tape node; empty parents + no backward_fn marks a leaf
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  std::size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major tensor of doubles with reverse-mode autodiff.
/// Copies are shallow (shared storage); ops build a dynamic tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);

  bool valid() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int dim(int i) const;
  std::size_t numel() const;

  double* data();
  const double* data() const;
  double value() const;                       // scalar tensors only
  double at(std::initializer_list<int>) const;

  bool requires_grad() const;
  bool is_leaf() const;
  double* grad();
  const double* grad() const;
  void zero_grad();

  /// Value-only copy, detached from the tape.
  Tensor detached() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Global autograd switch. Ops record the tape only while enabled.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse pass from a scalar loss. Accumulates into leaf grads; grads of
/// interior nodes are reset per call, so repeated calls add up on leaves.
void backward(const Tensor& loss);

// elementwise, same shape unless noted
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);  // log(1 + e^x), overflow safe
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor min_elem(const Tensor& a, const Tensor& b);
Tensor max_elem(const Tensor& a, const Tensor& b);
Tensor clamp_min(const Tensor& a, double floor);
/// Clamped inverse sigmoid: log(p/(1-p)) with p clamped to [eps, 1-eps].
Tensor logit(const Tensor& a, double eps = 1e-6);

// shape / reduction
Tensor sum(const Tensor& a);                     // -> scalar
Tensor mean_rows(const Tensor& a);               // [r x c] -> [c]
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);               // [r x c] -> [c x r]
Tensor slice_rows(const Tensor& a, int begin, int count);
Tensor slice_cols(const Tensor& a, int begin, int count);
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
/// [r x c] + [c], broadcast over rows.
Tensor add_rows(const Tensor& m, const Tensor& v);

// linear algebra / nn primitives
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// Pure scaled dot-product attention on pre-projected q/k/v, split into
/// `heads` column groups, per-head softmax(q k^T / sqrt(dh)) v, re-concatenated.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);
/// 2-D convolution on [H x W x Cin] with kernel [kh x kw x Cin x Cout],
/// replicate padding of (k-1)/2, square stride.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
/// Bilinear x2 upsampling on [h x w x C] (half-pixel centers, clamped edges).
Tensor upsample2x(const Tensor& x);
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

std::string shape_str(const Shape& s);

}  // namespace reftrack
