#include "reftrack/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace reftrack {

void init_fanin(Tensor& t, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  double* d = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i) d[i] = rng.uniform(-bound, bound);
}

Linear::Linear(int in, int out, Rng& rng) {
  w = Tensor::zeros({in, out}, true);
  b = Tensor::zeros({out}, true);
  init_fanin(w, in, rng);
  init_fanin(b, in, rng);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

LayerNorm::LayerNorm(int dim) {
  gain = Tensor::full({dim}, 1.0, true);
  bias = Tensor::zeros({dim}, true);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Mlp::Mlp(int in, int hidden, int out, int depth, Rng& rng) {
  if (depth < 1) throw std::invalid_argument("mlp: depth must be >= 1");
  for (int i = 0; i < depth; ++i) {
    const int li = i == 0 ? in : hidden;
    const int lo = i == depth - 1 ? out : hidden;
    layers.emplace_back(li, lo, rng);
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].collect(prefix + "." + std::to_string(i), out);
  }
}

MultiHeadAttention::MultiHeadAttention(int dim, int heads_, Rng& rng)
    : heads(heads_),
      wq(dim, dim, rng),
      wk(dim, dim, rng),
      wv(dim, dim, rng),
      wo(dim, dim, rng) {
  if (dim % heads_ != 0) {
    throw std::invalid_argument("attention: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads_));
  }
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v) const {
  return wo.forward(attention(wq.forward(q), wk.forward(k), wv.forward(v), heads));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  wo.collect(prefix + ".wo", out);
}

namespace {

// sin/cos pairs with geometrically decaying frequencies, value in [0,1]
void fill_sine(double* out, double value, int dims) {
  const int pairs = dims / 2;
  for (int p = 0; p < pairs; ++p) {
    const double freq = 2.0 * std::numbers::pi / std::pow(10000.0, static_cast<double>(p) / pairs);
    out[2 * p] = std::sin(freq * value);
    out[2 * p + 1] = std::cos(freq * value);
  }
}

}  // namespace

Tensor sine_position_2d(int h, int w, int d) {
  if (d % 4 != 0) throw std::invalid_argument("sine_position_2d: d must be divisible by 4");
  Tensor out = Tensor::zeros({h * w, d});
  double* data = out.data();
  const int half = d / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* row = data + (static_cast<std::size_t>(y) * w + x) * d;
      fill_sine(row, (y + 0.5) / h, half);
      fill_sine(row + half, (x + 0.5) / w, half);
    }
  }
  return out;
}

Tensor box_sine_features(const Tensor& boxes, int d) {
  if (boxes.rank() != 2 || boxes.dim(1) != 4) {
    throw std::invalid_argument("box_sine_features: boxes must be [R x 4], got " +
                                shape_str(boxes.shape()));
  }
  if (d % 8 != 0) throw std::invalid_argument("box_sine_features: d must be divisible by 8");
  const int per_coord = d / 4;
  const int pairs = per_coord / 2;
  std::vector<Tensor> parts;
  parts.reserve(4 * static_cast<std::size_t>(pairs));
  for (int coord = 0; coord < 4; ++coord) {
    Tensor col = slice_cols(boxes, coord, 1);
    for (int p = 0; p < pairs; ++p) {
      const double freq =
          2.0 * std::numbers::pi / std::pow(10000.0, static_cast<double>(p) / pairs);
      Tensor scaled = mul_scalar(col, freq);
      parts.push_back(sin(scaled));
      parts.push_back(cos(scaled));
    }
  }
  return concat_cols(parts);
}

void AdamW::add(const Parameter& p, double lr, double weight_decay) {
  if (!p.tensor.requires_grad()) {
    throw std::logic_error("optimizer: parameter " + p.name + " does not require grad");
  }
  Entry e;
  e.param = p;
  e.lr = lr;
  e.weight_decay = weight_decay;
  e.m.assign(p.tensor.numel(), 0.0);
  e.v.assign(p.tensor.numel(), 0.0);
  entries_.push_back(std::move(e));
}

void AdamW::zero_grad() {
  for (Entry& e : entries_) {
    e.param.tensor.grad();  // materialize
    e.param.tensor.zero_grad();
  }
}

void AdamW::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (Entry& e : entries_) {
    auto impl = e.param.tensor.impl();
    if (impl->grad.size() != impl->data.size()) {
      throw std::logic_error("optimizer: missing grad for parameter " + e.param.name);
    }
    const double lr = e.lr * lr_scale_;
    double* p = impl->data.data();
    const double* g = impl->grad.data();
    for (std::size_t i = 0; i < impl->data.size(); ++i) {
      p[i] *= 1.0 - lr * e.weight_decay;
      e.m[i] = beta1_ * e.m[i] + (1.0 - beta1_) * g[i];
      e.v[i] = beta2_ * e.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

AdamW::State AdamW::state() const {
  State s;
  s.step_count = step_count_;
  for (const Entry& e : entries_) {
    s.m.push_back(e.m);
    s.v.push_back(e.v);
  }
  return s;
}

void AdamW::restore(const State& s) {
  if (s.m.size() != entries_.size() || s.v.size() != entries_.size()) {
    throw std::runtime_error("optimizer: state entry count mismatch");
  }
  step_count_ = s.step_count;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (s.m[i].size() != entries_[i].m.size() || s.v[i].size() != entries_[i].v.size()) {
      throw std::runtime_error("optimizer: state size mismatch for " + entries_[i].param.name);
    }
    entries_[i].m = s.m[i];
    entries_[i].v = s.v[i];
  }
}

double AdamW::clip_grad_norm(double max_norm) {
  double total = 0.0;
  for (Entry& e : entries_) {
    auto impl = e.param.tensor.impl();
    if (impl->grad.size() != impl->data.size()) continue;
    for (double g : impl->grad) total += g * g;
  }
  total = std::sqrt(total);
  if (total > max_norm && total > 0.0) {
    const double scale = max_norm / total;
    for (Entry& e : entries_) {
      auto impl = e.param.tensor.impl();
      if (impl->grad.size() != impl->data.size()) continue;
      for (double& g : impl->grad) g *= scale;
    }
  }
  return total;
}

}  // namespace reftrack
