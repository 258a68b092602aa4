#pragma once

#include "fisherpinn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fisherpinn::nn {

enum class Activation { tanh, sigmoid, relu, mish, linear };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
    case Activation::mish: return "mish";
    case Activation::linear: return "linear";
  }
  return "linear";
}

inline Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::tanh, Activation::sigmoid, Activation::relu, Activation::mish, Activation::linear})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

inline double mish(double z) { return z * std::tanh(softplus(z)); }

inline double mish_derivative(double z) {
  const double t = std::tanh(softplus(z));
  return t + z * (1.0 - t * t) * sigmoid(z);
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return sigmoid(z);
    case Activation::relu: return z > 0 ? z : 0.0;
    case Activation::mish: return mish(z);
    case Activation::linear: return z;
  }
  return z;
}

/// Derivative expressed through the pre-activation z and the output y = act(z).
inline double activate_derivative(Activation a, double z, double y) {
  switch (a) {
    case Activation::tanh: return 1.0 - y * y;
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::relu: return z > 0 ? 1.0 : 0.0;
    case Activation::mish: return mish_derivative(z);
    case Activation::linear: return 1.0;
  }
  return 1.0;
}

struct LayerSpec {
  int width = 1;
  Activation activation = Activation::linear;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Multilayer perceptron. Inputs pass through a fixed affine normalization
/// (in - offset) * scale before the first layer. The last layer is the output.
struct NetworkParams {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<LayerSpec> layers;
  std::vector<Matrix> weights;  // weights[l] is width_l x width_{l-1}
  std::vector<Vector> biases;
  Vector input_offset;
  Vector input_scale;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || layers.empty()) throw DimensionError("network dimensions must be >= 1");
    if (weights.size() != layers.size() || biases.size() != layers.size())
      throw DimensionError("weights/biases do not match layer count");
    int prev = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].width < 1) throw DimensionError("layer width must be >= 1");
      if (weights[l].rows() != layers[l].width || weights[l].cols() != prev || biases[l].size() != layers[l].width)
        throw DimensionError("layer " + std::to_string(l) + " shapes do not chain");
      if (!weights[l].allFinite() || !biases[l].allFinite()) throw NumericError("non-finite network parameter");
      prev = layers[l].width;
    }
    if (prev != output_dim) throw DimensionError("output layer width does not match output_dim");
    if (input_offset.size() != input_dim || input_scale.size() != input_dim)
      throw DimensionError("input normalization size mismatch");
  }
};

inline std::string describe(const std::vector<LayerSpec>& layers) {
  std::string s;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (!s.empty()) s += "-";
    s += std::string(to_string(layers[i].activation)) + std::to_string(layers[i].width);
  }
  return s.empty() ? "linear" : s;
}

/// Builds a network with hidden layers `hidden` and a linear output layer,
/// Glorot-uniform weights and zero biases.
inline NetworkParams make_mlp(int input_dim, const std::vector<LayerSpec>& hidden, int output_dim,
                              std::uint64_t seed) {
  NetworkParams p;
  p.input_dim = input_dim;
  p.output_dim = output_dim;
  p.layers = hidden;
  p.layers.push_back({output_dim, Activation::linear});
  p.input_offset = Vector::Zero(input_dim);
  p.input_scale = Vector::Ones(input_dim);
  std::mt19937_64 rng(seed);
  int prev = input_dim;
  for (const auto& spec : p.layers) {
    const double limit = std::sqrt(6.0 / (prev + spec.width));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(spec.width, prev);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector::Zero(spec.width));
    prev = spec.width;
  }
  p.validate();
  return p;
}

/// Sets the input normalization so [lower, upper] maps onto [-1, 1]. Degenerate
/// intervals keep unit scale.
inline void set_input_bounds(NetworkParams& p, const Vector& lower, const Vector& upper) {
  if (lower.size() != p.input_dim || upper.size() != p.input_dim) throw DimensionError("bounds size mismatch");
  p.input_offset = 0.5 * (lower + upper);
  p.input_scale.resize(p.input_dim);
  for (int i = 0; i < p.input_dim; ++i) {
    const double half = 0.5 * (upper[i] - lower[i]);
    p.input_scale[i] = half > 0 ? 1.0 / half : 1.0;
  }
}

/// Activations cached by a batched forward pass (one column per sample).
struct ForwardCache {
  std::vector<Matrix> pre;   // z_l
  std::vector<Matrix> post;  // a_l, post[0] is the normalized input
};

inline Matrix normalize_inputs(const NetworkParams& p, const Matrix& inputs) {
  return (inputs.colwise() - p.input_offset).array().colwise() * p.input_scale.array();
}

inline Matrix forward_batch(const NetworkParams& p, const Matrix& inputs, ForwardCache* cache = nullptr) {
  if (inputs.rows() != p.input_dim) throw DimensionError("input dimension does not match network");
  Matrix a = normalize_inputs(p, inputs);
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
    cache->post.push_back(a);
  }
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Matrix z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    const Activation act = p.layers[l].activation;
    if (act == Activation::linear) {
      a = z;
    } else {
      a = z.unaryExpr([act](double v) { return activate(act, v); });
    }
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(a);
    }
  }
  return a;
}

inline Vector mlp_forward(const NetworkParams& p, const Vector& input) {
  if (input.size() != p.input_dim) throw DimensionError("input dimension does not match network");
  Vector out = forward_batch(p, input);
  if (!out.allFinite()) throw NumericError("non-finite network output");
  return out;
}

/// Same shapes as the network parameters.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const NetworkParams& p) {
    Gradients g;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      g.weights.push_back(Matrix::Zero(p.weights[l].rows(), p.weights[l].cols()));
      g.biases.push_back(Vector::Zero(p.biases[l].size()));
    }
    return g;
  }

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }

  Gradients& operator*=(double s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }
};

/// Reverse pass. `output_grad` is dL/d(output) per sample column. Parameter
/// gradients are accumulated into `grads`; returns dL/d(raw input) per column.
inline Matrix backward_batch(const NetworkParams& p, const ForwardCache& cache, const Matrix& output_grad,
                             Gradients& grads) {
  Matrix delta = output_grad;
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const Activation act = p.layers[li].activation;
    if (act != Activation::linear) {
      const Matrix& z = cache.pre[li];
      const Matrix& y = cache.post[li + 1];
      for (Eigen::Index c = 0; c < delta.cols(); ++c)
        for (Eigen::Index r = 0; r < delta.rows(); ++r) delta(r, c) *= activate_derivative(act, z(r, c), y(r, c));
    }
    grads.weights[li].noalias() += delta * cache.post[li].transpose();
    grads.biases[li] += delta.rowwise().sum();
    delta = p.weights[li].transpose() * delta;
  }
  return delta.array().colwise() * p.input_scale.array();
}

/// Mean over the batch of the squared error norm, and its gradient.
inline double mlp_param_gradient(const NetworkParams& p, const Matrix& inputs, const Matrix& targets,
                                 Gradients& grads) {
  if (inputs.cols() == 0) throw std::invalid_argument("batch must be non-empty");
  if (targets.rows() != p.output_dim || targets.cols() != inputs.cols())
    throw DimensionError("target shape does not match network output");
  ForwardCache cache;
  const Matrix out = forward_batch(p, inputs, &cache);
  const Matrix diff = out - targets;
  const double n = static_cast<double>(inputs.cols());
  grads = Gradients::zeros_like(p);
  backward_batch(p, cache, (2.0 / n) * diff, grads);
  return diff.squaredNorm() / n;
}

/// Forward-mode Jacobian of the outputs w.r.t. the selected input coordinates.
inline Matrix mlp_input_jacobian(const NetworkParams& p, const Vector& input, const std::vector<int>& indices) {
  if (input.size() != p.input_dim) throw DimensionError("input dimension does not match network");
  const auto k = static_cast<Eigen::Index>(indices.size());
  Matrix tangent = Matrix::Zero(p.input_dim, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const int idx = indices[static_cast<std::size_t>(j)];
    if (idx < 0 || idx >= p.input_dim) throw DimensionError("input index out of range");
    tangent(idx, j) = p.input_scale[idx];
  }
  Vector a = normalize_inputs(p, input);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vector z = p.weights[l] * a + p.biases[l];
    tangent = p.weights[l] * tangent;
    const Activation act = p.layers[l].activation;
    if (act != Activation::linear) {
      Vector y = z.unaryExpr([act](double v) { return activate(act, v); });
      for (Eigen::Index r = 0; r < z.size(); ++r) tangent.row(r) *= activate_derivative(act, z[r], y[r]);
      a = std::move(y);
    } else {
      a = std::move(z);
    }
  }
  return tangent;
}

// ---------------------------------------------------------------------------
// Flat parameter views, used by the optimizer and gradient checks

// Layout: W0, b0, W1, b1, ...; surplus entries of the longer list follow in order.
inline Vector flatten(const std::vector<Matrix>& ws, const std::vector<Vector>& bs) {
  Eigen::Index n = 0;
  for (const auto& w : ws) n += w.size();
  for (const auto& b : bs) n += b.size();
  Vector flat(n);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < std::max(ws.size(), bs.size()); ++l) {
    if (l < ws.size()) {
      flat.segment(off, ws[l].size()) = ws[l].reshaped();
      off += ws[l].size();
    }
    if (l < bs.size()) {
      flat.segment(off, bs[l].size()) = bs[l];
      off += bs[l].size();
    }
  }
  return flat;
}

inline void unflatten(const Vector& flat, std::vector<Matrix>& ws, std::vector<Vector>& bs) {
  Eigen::Index n = 0;
  for (const auto& w : ws) n += w.size();
  for (const auto& b : bs) n += b.size();
  if (n != flat.size()) throw DimensionError("flat parameter vector has the wrong length");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < std::max(ws.size(), bs.size()); ++l) {
    if (l < ws.size()) {
      ws[l].reshaped() = flat.segment(off, ws[l].size());
      off += ws[l].size();
    }
    if (l < bs.size()) {
      bs[l] = flat.segment(off, bs[l].size());
      off += bs[l].size();
    }
  }
}

inline Vector flatten(const NetworkParams& p) { return flatten(p.weights, p.biases); }
inline Vector flatten(const Gradients& g) { return flatten(g.weights, g.biases); }
inline void unflatten(const Vector& flat, NetworkParams& p) { unflatten(flat, p.weights, p.biases); }

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n, double lr = 1e-3) {
    AdamState s;
    s.first_moment = Vector::Zero(n);
    s.second_moment = Vector::Zero(n);
    s.lr = lr;
    return s;
  }
};

/// Bias-corrected Adam update of a flat parameter vector in place.
inline void adam_step(Vector& params, const Vector& grads, AdamState& st) {
  if (params.size() != grads.size() || st.first_moment.size() != params.size() ||
      st.second_moment.size() != params.size())
    throw DimensionError("adam_step: shape mismatch");
  st.step_count += 1;
  st.first_moment = st.beta1 * st.first_moment + (1.0 - st.beta1) * grads;
  st.second_moment = st.beta2 * st.second_moment + (1.0 - st.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  params.array() -= st.lr * (st.first_moment.array() / c1) / ((st.second_moment.array() / c2).sqrt() + st.epsilon);
}

inline void adam_step(NetworkParams& p, const Gradients& g, AdamState& st) {
  Vector flat = flatten(p);
  adam_step(flat, flatten(g), st);
  unflatten(flat, p);
}

// ---------------------------------------------------------------------------
// Physics Guard

struct PhysicsGuardBounds {
  Vector lower;
  Vector upper;

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) throw DimensionError("guard bounds size mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw std::invalid_argument("guard bounds require lower < upper");
  }
};

/// sigma(z) * (upper - lower) + lower, kept strictly inside (lower, upper) in
/// floating point.
inline Vector physics_guard(const Vector& z, const PhysicsGuardBounds& b) {
  if (z.size() != b.lower.size()) throw DimensionError("guard input dimension mismatch");
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double lo = b.lower[i], hi = b.upper[i];
    double v = sigmoid(z[i]) * (hi - lo) + lo;
    if (!(v < hi)) v = std::nextafter(hi, lo);
    if (!(v > lo)) v = std::nextafter(lo, hi);
    out[i] = v;
  }
  return out;
}

/// d guard / d z (diagonal), evaluated on the unclamped sigmoid.
inline Vector physics_guard_derivative(const Vector& z, const PhysicsGuardBounds& b) {
  Vector d(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double s = sigmoid(z[i]);
    d[i] = s * (1.0 - s) * (b.upper[i] - b.lower[i]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Gated recurrent unit (single layer)

struct GruSpec {
  int input_size = 1;
  int hidden_size = 1;
  // update (z), reset (r) and candidate (n) gates
  Matrix Wz, Wr, Wn;  // hidden x input
  Matrix Uz, Ur, Un;  // hidden x hidden
  Vector bz, br, bn;

  static GruSpec zeros(int input_size, int hidden_size) {
    GruSpec g;
    g.input_size = input_size;
    g.hidden_size = hidden_size;
    for (Matrix* w : {&g.Wz, &g.Wr, &g.Wn}) *w = Matrix::Zero(hidden_size, input_size);
    for (Matrix* u : {&g.Uz, &g.Ur, &g.Un}) *u = Matrix::Zero(hidden_size, hidden_size);
    for (Vector* b : {&g.bz, &g.br, &g.bn}) *b = Vector::Zero(hidden_size);
    return g;
  }

  static GruSpec random(int input_size, int hidden_size, std::uint64_t seed) {
    GruSpec g = zeros(input_size, hidden_size);
    std::mt19937_64 rng(seed);
    const double k = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    std::uniform_real_distribution<double> dist(-k, k);
    auto fill = [&](Matrix& m) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    };
    for (Matrix* w : {&g.Wz, &g.Wr, &g.Wn, &g.Uz, &g.Ur, &g.Un}) fill(*w);
    return g;
  }

  std::vector<Matrix> matrices() const { return {Wz, Wr, Wn, Uz, Ur, Un}; }
  std::vector<Vector> vectors() const { return {bz, br, bn}; }

  void validate() const {
    auto chk = [](const Matrix& m, int r, int c) {
      if (m.rows() != r || m.cols() != c) throw DimensionError("GRU parameter shape mismatch");
    };
    for (const Matrix* w : {&Wz, &Wr, &Wn}) chk(*w, hidden_size, input_size);
    for (const Matrix* u : {&Uz, &Ur, &Un}) chk(*u, hidden_size, hidden_size);
    for (const Vector* b : {&bz, &br, &bn})
      if (b->size() != hidden_size) throw DimensionError("GRU bias shape mismatch");
  }
};

struct GruStepCache {
  Vector x, h_prev, z, r, n;
};

/// h' = (1 - z) * h + z * n with z = sigma(Wz x + Uz h + bz),
/// r = sigma(Wr x + Ur h + br), n = tanh(Wn x + Un (r * h) + bn).
inline Vector gru_cell(const GruSpec& g, const Vector& x, const Vector& h, GruStepCache* cache = nullptr) {
  if (x.size() != g.input_size || h.size() != g.hidden_size) throw DimensionError("GRU input dimension mismatch");
  const Vector z = (g.Wz * x + g.Uz * h + g.bz).unaryExpr([](double v) { return sigmoid(v); });
  const Vector r = (g.Wr * x + g.Ur * h + g.br).unaryExpr([](double v) { return sigmoid(v); });
  const Vector n = (g.Wn * x + g.Un * r.cwiseProduct(h) + g.bn).array().tanh().matrix();
  Vector next = (Vector::Ones(h.size()) - z).cwiseProduct(h) + z.cwiseProduct(n);
  if (cache) *cache = {x, h, z, r, n};
  return next;
}

inline Vector gru_forward(const GruSpec& g, const std::vector<Vector>& history,
                          std::vector<GruStepCache>* caches = nullptr) {
  if (history.empty()) throw std::invalid_argument("GRU history must contain at least one vector");
  Vector h = Vector::Zero(g.hidden_size);
  if (caches) caches->assign(history.size(), {});
  for (std::size_t t = 0; t < history.size(); ++t) h = gru_cell(g, history[t], h, caches ? &(*caches)[t] : nullptr);
  if (!h.allFinite()) throw NumericError("non-finite GRU hidden state");
  return h;
}

struct GruGradients {
  Matrix Wz, Wr, Wn, Uz, Ur, Un;
  Vector bz, br, bn;

  static GruGradients zeros_like(const GruSpec& g) {
    GruSpec z = GruSpec::zeros(g.input_size, g.hidden_size);
    return {z.Wz, z.Wr, z.Wn, z.Uz, z.Ur, z.Un, z.bz, z.br, z.bn};
  }
  std::vector<Matrix> matrices() const { return {Wz, Wr, Wn, Uz, Ur, Un}; }
  std::vector<Vector> vectors() const { return {bz, br, bn}; }
};

/// Backpropagation through time from dL/d(final hidden state).
inline void gru_backward(const GruSpec& g, const std::vector<GruStepCache>& caches, const Vector& dh_final,
                         GruGradients& grads) {
  Vector dh = dh_final;
  for (std::size_t t = caches.size(); t-- > 0;) {
    const auto& c = caches[t];
    const Vector one = Vector::Ones(c.z.size());
    const Vector dn = dh.cwiseProduct(c.z);
    const Vector dz = dh.cwiseProduct(c.n - c.h_prev);
    Vector dh_prev = dh.cwiseProduct(one - c.z);

    const Vector dn_pre = dn.cwiseProduct(one - c.n.cwiseProduct(c.n));
    const Vector rh = c.r.cwiseProduct(c.h_prev);
    grads.Wn.noalias() += dn_pre * c.x.transpose();
    grads.Un.noalias() += dn_pre * rh.transpose();
    grads.bn += dn_pre;
    const Vector drh = g.Un.transpose() * dn_pre;
    const Vector dr = drh.cwiseProduct(c.h_prev);
    dh_prev += drh.cwiseProduct(c.r);

    const Vector dz_pre = dz.cwiseProduct(c.z.cwiseProduct(one - c.z));
    const Vector dr_pre = dr.cwiseProduct(c.r.cwiseProduct(one - c.r));
    grads.Wz.noalias() += dz_pre * c.x.transpose();
    grads.Uz.noalias() += dz_pre * c.h_prev.transpose();
    grads.bz += dz_pre;
    grads.Wr.noalias() += dr_pre * c.x.transpose();
    grads.Ur.noalias() += dr_pre * c.h_prev.transpose();
    grads.br += dr_pre;
    dh_prev += g.Uz.transpose() * dz_pre + g.Ur.transpose() * dr_pre;
    dh = std::move(dh_prev);
  }
}

// Batched variants: one column per sequence.
struct GruBatchCache {
  Matrix x, h_prev, z, r, n;
};

inline Matrix gru_forward_batch(const GruSpec& g, const std::vector<Matrix>& history,
                                std::vector<GruBatchCache>* caches = nullptr) {
  if (history.empty()) throw std::invalid_argument("GRU history must contain at least one step");
  const Eigen::Index b = history.front().cols();
  Matrix h = Matrix::Zero(g.hidden_size, b);
  if (caches) caches->assign(history.size(), {});
  auto sig = [](double v) { return sigmoid(v); };
  for (std::size_t t = 0; t < history.size(); ++t) {
    const Matrix& x = history[t];
    if (x.rows() != g.input_size || x.cols() != b) throw DimensionError("GRU batch input dimension mismatch");
    Matrix z = g.Wz * x + g.Uz * h;
    z.colwise() += g.bz;
    z = z.unaryExpr(sig);
    Matrix r = g.Wr * x + g.Ur * h;
    r.colwise() += g.br;
    r = r.unaryExpr(sig);
    Matrix n = g.Wn * x + g.Un * r.cwiseProduct(h);
    n.colwise() += g.bn;
    n = n.array().tanh().matrix();
    Matrix next = h + z.cwiseProduct(n - h);
    if (caches) (*caches)[t] = {x, std::move(h), std::move(z), std::move(r), std::move(n)};
    h = std::move(next);
  }
  if (!h.allFinite()) throw NumericError("non-finite GRU hidden state");
  return h;
}

/// Accumulates parameter gradients; returns nothing since inputs are data.
inline void gru_backward_batch(const GruSpec& g, const std::vector<GruBatchCache>& caches, const Matrix& dh_final,
                               GruGradients& grads) {
  Matrix dh = dh_final;
  for (std::size_t t = caches.size(); t-- > 0;) {
    const auto& c = caches[t];
    const Matrix dn_pre = dh.cwiseProduct(c.z).cwiseProduct((1.0 - c.n.array().square()).matrix());
    const Matrix dz_pre =
        dh.cwiseProduct(c.n - c.h_prev).cwiseProduct((c.z.array() * (1.0 - c.z.array())).matrix());
    Matrix dh_prev = dh - dh.cwiseProduct(c.z);
    const Matrix rh = c.r.cwiseProduct(c.h_prev);
    grads.Wn.noalias() += dn_pre * c.x.transpose();
    grads.Un.noalias() += dn_pre * rh.transpose();
    grads.bn += dn_pre.rowwise().sum();
    const Matrix drh = g.Un.transpose() * dn_pre;
    const Matrix dr_pre = drh.cwiseProduct(c.h_prev).cwiseProduct((c.r.array() * (1.0 - c.r.array())).matrix());
    dh_prev += drh.cwiseProduct(c.r);
    grads.Wz.noalias() += dz_pre * c.x.transpose();
    grads.Uz.noalias() += dz_pre * c.h_prev.transpose();
    grads.bz += dz_pre.rowwise().sum();
    grads.Wr.noalias() += dr_pre * c.x.transpose();
    grads.Ur.noalias() += dr_pre * c.h_prev.transpose();
    grads.br += dr_pre.rowwise().sum();
    dh_prev.noalias() += g.Uz.transpose() * dz_pre + g.Ur.transpose() * dr_pre;
    dh = std::move(dh_prev);
  }
}

inline Vector flatten(const GruSpec& g) { return flatten(g.matrices(), g.vectors()); }
inline Vector flatten(const GruGradients& g) { return flatten(g.matrices(), g.vectors()); }
inline void unflatten(const Vector& flat, GruSpec& g) {
  auto ms = g.matrices();
  auto vs = g.vectors();
  unflatten(flat, ms, vs);
  g.Wz = ms[0], g.Wr = ms[1], g.Wn = ms[2], g.Uz = ms[3], g.Ur = ms[4], g.Un = ms[5];
  g.bz = vs[0], g.br = vs[1], g.bn = vs[2];
}

}  // namespace fisherpinn::nn
