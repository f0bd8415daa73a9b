#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "reftrack/tensor.hpp"

namespace reftrack {

/// Named trainable tensor; names are unique within a model.
struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<Parameter>;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fanin(Tensor& t, int fan_in, Rng& rng);

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng);

  Tensor forward(const Tensor& x) const { return add_rows(matmul(x, w), b); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Stack of linears with relu between (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(int in, int hidden, int out, int depth, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Projected multi-head attention: wo(attention(wq q, wk k, wv v)).
struct MultiHeadAttention {
  int heads = 1;
  Linear wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads, Rng& rng);

  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// 2-D sinusoidal position table for an h x w grid, flattened to [h*w x d].
/// First d/2 dims encode y, the rest x; constant (no gradient).
Tensor sine_position_2d(int h, int w, int d);

/// Sinusoidal featurization of boxes [R x 4] -> [R x d], d/4 dims per
/// coordinate; differentiable in the box values.
Tensor box_sine_features(const Tensor& boxes, int d);

/// Decoupled-weight-decay adaptive-moment optimizer.
/// Update: p *= (1 - lr*wd); m,v moments with bias correction;
/// p -= lr * mhat / (sqrt(vhat) + eps).
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add(const Parameter& p, double lr, double weight_decay);
  void set_lr_scale(double scale) { lr_scale_ = scale; }

  void zero_grad();
  void step();

  long step_count() const { return step_count_; }

  // checkpoint support: moments and step counter, in registration order
  struct State {
    long step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
  };
  State state() const;
  void restore(const State& s);

  /// Global-norm gradient clipping over the registered parameters.
  double clip_grad_norm(double max_norm);

 private:
  struct Entry {
    Parameter param;
    double lr;
    double weight_decay;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Entry> entries_;
  double beta1_, beta2_, eps_;
  double lr_scale_ = 1.0;
  long step_count_ = 0;
};

}  // namespace reftrack
