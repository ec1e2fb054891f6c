#include "ufo/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace ufo {

Vec l2_normalize(const Vec& v) {
  const double n = v.norm();
  if (!(n > kZeroNormEps)) {
    throw ZeroVectorError("l2_normalize: norm " + format_double(n) +
                          " below " + format_double(kZeroNormEps));
  }
  return v / n;
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw DimMismatchError("cosine: dims " + std::to_string(a.size()) + " vs " +
                           std::to_string(b.size()));
  }
  return std::clamp(a.dot(b), -1.0, 1.0);
}

namespace {

void apply_activation(Mat& z, Activation act) {
  switch (act) {
    case Activation::identity:
      return;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::sigmoid:
      z = z.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      return;
  }
}

// d act(z)/dz evaluated from the pre-activation z and activation a = act(z).
Mat activation_grad(const Mat& z, const Mat& a, Activation act) {
  switch (act) {
    case Activation::identity:
      return Mat::Ones(z.rows(), z.cols());
    case Activation::relu:
      // Subgradient at 0 is 0.
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid:
      return (a.array() * (1.0 - a.array())).matrix();
  }
  return Mat();
}

}  // namespace

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += std::size_t(l.W.size()) + std::size_t(l.b.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ValidationError("MlpParams: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.b.size() != l.W.rows()) {
      throw ShapeMismatchError("MlpParams: layer " + std::to_string(k) +
                               " bias/weight rows mismatch");
    }
    if (k + 1 < layers.size() && layers[k + 1].W.cols() != l.W.rows()) {
      throw ShapeMismatchError("MlpParams: layer dims do not chain at layer " +
                               std::to_string(k));
    }
    if (!l.W.allFinite() || !l.b.allFinite()) {
      throw ValidationError("MlpParams: non-finite entry in layer " + std::to_string(k));
    }
  }
}

std::uint64_t MlpParams::weight_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers) {
    h = hash_doubles(l.W.data(), std::size_t(l.W.size()), h);
    h = hash_doubles(l.b.data(), std::size_t(l.b.size()), h);
  }
  return h;
}

MlpParams make_mlp(std::span<const int> dims, std::span<const Activation> acts,
                   std::uint64_t seed) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1) {
    throw ValidationError("make_mlp: need n+1 dims for n activations");
  }
  Rng rng(seed);
  MlpParams p;
  p.layers.reserve(acts.size());
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const int in = dims[k], out = dims[k + 1];
    if (in <= 0 || out <= 0) throw ValidationError("make_mlp: non-positive dim");
    MlpLayer l;
    l.W = Mat(out, in);
    const double a = std::sqrt(6.0 / double(in + out));
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) l.W(i, j) = rng.uniform(-a, a);
    }
    l.b = Vec::Zero(out);
    l.act = acts[k];
    p.layers.push_back(std::move(l));
  }
  return p;
}

void MlpGrads::scale(double s) {
  for (auto& l : layers) {
    l.dW *= s;
    l.db *= s;
  }
}

void MlpGrads::accumulate(const MlpGrads& other) {
  if (layers.size() != other.layers.size()) {
    throw ShapeMismatchError("MlpGrads::accumulate: layer count mismatch");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].dW += other.layers[k].dW;
    layers[k].db += other.layers[k].db;
  }
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  g.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) {
    g.layers.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
  }
  return g;
}

Mat mlp_forward_cached(const MlpParams& p, const Mat& X, MlpForwardCache& cache) {
  if (X.cols() != p.in_dim()) {
    throw DimMismatchError("mlp_forward: input dim " + std::to_string(X.cols()) +
                           " vs layer in-dim " + std::to_string(p.in_dim()));
  }
  cache.pre.clear();
  cache.post.clear();
  cache.pre.reserve(p.layers.size());
  cache.post.reserve(p.layers.size());
  Mat a = X;
  for (const auto& l : p.layers) {
    Mat z = a * l.W.transpose();
    z.rowwise() += l.b.transpose();
    cache.pre.push_back(z);
    apply_activation(z, l.act);
    cache.post.push_back(z);
    a = std::move(z);
  }
  return a;
}

Mat mlp_forward(const MlpParams& p, const Mat& X) {
  MlpForwardCache cache;
  return mlp_forward_cached(p, X, cache);
}

Vec mlp_forward(const MlpParams& p, const Vec& x) {
  const Mat y = mlp_forward(p, Mat(x.transpose()));
  return y.row(0).transpose();
}

namespace {

MlpGrads backward_impl(const MlpParams& p, const Mat& X, const MlpForwardCache& cache,
                       const Mat& upstream, bool upstream_is_pre_activation,
                       Mat* grad_input) {
  const std::size_t L = p.layers.size();
  if (cache.pre.size() != L || upstream.rows() != X.rows() ||
      upstream.cols() != p.out_dim()) {
    throw DimMismatchError("mlp_backward: upstream/cache shape mismatch");
  }
  MlpGrads grads;
  grads.layers.resize(L);
  Mat delta = upstream;  // dLoss/d(post-activation of current layer)
  for (std::size_t k = L; k-- > 0;) {
    const auto& l = p.layers[k];
    const Mat dz =
        (k == L - 1 && upstream_is_pre_activation)
            ? delta
            : delta.cwiseProduct(activation_grad(cache.pre[k], cache.post[k], l.act)).eval();
    const Mat& input = (k == 0) ? X : cache.post[k - 1];
    grads.layers[k].dW = dz.transpose() * input;
    grads.layers[k].db = dz.colwise().sum().transpose();
    if (k > 0 || grad_input != nullptr) {
      delta = dz * l.W;
    }
    if (k == 0 && grad_input != nullptr) *grad_input = delta;
  }
  return grads;
}

}  // namespace

MlpGrads mlp_backward(const MlpParams& p, const Mat& X, const MlpForwardCache& cache,
                      const Mat& upstream, Mat* grad_input) {
  return backward_impl(p, X, cache, upstream, false, grad_input);
}

MlpGrads mlp_backward_from_logits(const MlpParams& p, const Mat& X,
                                  const MlpForwardCache& cache, const Mat& upstream,
                                  Mat* grad_input) {
  return backward_impl(p, X, cache, upstream, true, grad_input);
}

MlpGrads mlp_backward(const MlpParams& p, const Vec& x, const Vec& upstream,
                      Vec* grad_input) {
  MlpForwardCache cache;
  mlp_forward_cached(p, Mat(x.transpose()), cache);
  Mat gin;
  MlpGrads g = mlp_backward(p, Mat(x.transpose()), cache, Mat(upstream.transpose()),
                            grad_input ? &gin : nullptr);
  if (grad_input) *grad_input = gin.row(0).transpose();
  return g;
}

Vec normalize_cosine_backward(const Vec& y, const Vec& unit_other) {
  const double n = y.norm();
  if (!(n > kZeroNormEps)) throw ZeroVectorError("normalize_cosine_backward: zero vector");
  const Vec u = y / n;
  const double c = u.dot(unit_other);
  return (unit_other - c * u) / n;
}

AdamState AdamState::init(const MlpParams& p, AdamConfig hp) {
  AdamState s;
  s.hp = hp;
  s.step = 0;
  for (const auto& l : p.layers) {
    s.m.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
    s.v.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
  }
  return s;
}

namespace {

template <typename T>
void adam_update(T& theta, T& m, T& v, const T& g, const AdamConfig& hp,
                 double bc1, double bc2) {
  m = hp.beta1 * m + (1.0 - hp.beta1) * g;
  v = hp.beta2 * v + (1.0 - hp.beta2) * g.cwiseProduct(g);
  theta.array() -= hp.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hp.epsilon);
}

}  // namespace

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
  if (state.m.size() != params.layers.size() ||
      grads.layers.size() != params.layers.size()) {
    throw ShapeMismatchError("adam_step: layer count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.hp.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.hp.beta2, double(state.step));
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& l = params.layers[k];
    const auto& g = grads.layers[k];
    if (g.dW.rows() != l.W.rows() || g.dW.cols() != l.W.cols() ||
        g.db.size() != l.b.size()) {
      throw ShapeMismatchError("adam_step: gradient shape mismatch at layer " +
                               std::to_string(k));
    }
    adam_update(l.W, state.m[k].dW, state.v[k].dW, g.dW, state.hp, bc1, bc2);
    adam_update(l.b, state.m[k].db, state.v[k].db, g.db, state.hp, bc1, bc2);
  }
}

}  // namespace ufo
