#include "motrans/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace motrans::nn {

std::vector<std::uint8_t> TokenBatch::mask(int pad_id) const {
  std::vector<std::uint8_t> m(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != pad_id;
  return m;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require(x.rank() >= 1 && w.rank() == 2 && b.rank() == 1, "linear: bad ranks");
  const std::size_t in = w.dim(0), out = w.dim(1);
  require(x.shape().back() == in, "linear: input width " + std::to_string(x.shape().back()) +
                                      " does not match weight rows " + std::to_string(in));
  require(b.dim(0) == out, "linear: bias length mismatch");
  const std::size_t rows = x.size() / in;
  Shape shape = x.shape();
  shape.back() = out;

  std::vector<T> y(rows * out);
  auto xd = x.data();
  auto wd = w.data();
  auto bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* yr = &y[r * out];
    std::copy(bd.begin(), bd.end(), yr);
    const T* xr = &xd[r * in];
    for (std::size_t i = 0; i < in; ++i) {
      const T xv = xr[i];
      const T* wr = &wd[i * out];
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return make_result<T>(std::move(shape), std::move(y), {x, w, b}, [x, w, b, rows, in, out](Node<T>& self) mutable {
    const T* gy = self.grad.data();
    auto xd = x.data();
    auto wd = w.data();
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = gy + r * out;
        for (std::size_t i = 0; i < in; ++i) {
          const T* wr = &wd[i * out];
          T acc = 0;
          for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wr[o];
          gx[r * in + i] += acc;
        }
      }
    }
    if (w.requires_grad()) {
      auto gw = w.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = gy + r * out;
        for (std::size_t i = 0; i < in; ++i) {
          const T xv = xd[r * in + i];
          T* gwr = &gw[i * out];
          for (std::size_t o = 0; o < out; ++o) gwr[o] += xv * gr[o];
        }
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) gb[o] += gy[r * out + o];
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.size());
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [a, b](Node<T>& self) mutable {
    for (const Tensor<T>* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto g = t->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> y(x.data().begin(), x.data().end());
  for (auto& v : y) v *= factor;
  return make_result<T>(x.shape(), std::move(y), {x}, [x, factor](Node<T>& self) mutable {
    auto g = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>(x.shape(), std::move(y), {x}, [x](Node<T>& self) mutable {
    auto g = x.grad();
    auto xd = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > T(0)) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.shape().back();
  require(gamma.size() == d && beta.size() == d, "layer_norm: affine size mismatch");
  const std::size_t rows = x.size() / d;
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  std::vector<T> y(x.size());
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = &xd[r * d];
    T mean = 0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (xr[i] - mean) * inv;
      xhat[r * d + i] = h;
      y[r * d + i] = gd[i] * h + bd[i];
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                         d](Node<T>& self) mutable {
                          const T* gy = self.grad.data();
                          auto gd = gamma.data();
                          if (gamma.requires_grad() || beta.requires_grad()) {
                            auto gg = gamma.grad();
                            auto gb = beta.grad();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t i = 0; i < d; ++i) {
                                gg[i] += gy[r * d + i] * xhat[r * d + i];
                                gb[i] += gy[r * d + i];
                              }
                            }
                          }
                          if (!x.requires_grad()) return;
                          auto gx = x.grad();
                          const T n = static_cast<T>(d);
                          for (std::size_t r = 0; r < rows; ++r) {
                            T sum_dh = 0, sum_dh_h = 0;
                            for (std::size_t i = 0; i < d; ++i) {
                              const T dh = gy[r * d + i] * gd[i];
                              sum_dh += dh;
                              sum_dh_h += dh * xhat[r * d + i];
                            }
                            for (std::size_t i = 0; i < d; ++i) {
                              const T dh = gy[r * d + i] * gd[i];
                              gx[r * d + i] += inv_std[r] / n * (n * dh - sum_dh - xhat[r * d + i] * sum_dh_h);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads, bool causal,
                    const std::vector<std::uint8_t>* key_mask, std::vector<T>* probs) {
  require(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: inputs must be [B,T,d]");
  require_same_shape(k, v, "attention(k,v)");
  const std::size_t B = q.dim(0), Tq = q.dim(1), d = q.dim(2), Tk = k.dim(1);
  require(k.dim(0) == B && k.dim(2) == d, "attention: query/key shape mismatch " + shape_string(q.shape()) +
                                              " vs " + shape_string(k.shape()));
  require(heads >= 1 && d % static_cast<std::size_t>(heads) == 0,
          "attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(d));
  require(key_mask == nullptr || key_mask->size() == B * Tk, "attention: key mask size mismatch");
  const std::size_t H = static_cast<std::size_t>(heads), dh = d / H;
  const T scl = T(1) / std::sqrt(static_cast<T>(dh));

  std::vector<T> P(B * H * Tq * Tk, T(0));
  std::vector<T> out(B * Tq * d, T(0));
  auto qd = q.data();
  auto kd = k.data();
  auto vd = v.data();
  std::vector<T> row(Tk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < Tq; ++t) {
        const T* qv = &qd[(b * Tq + t) * d + h * dh];
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t s = 0; s < Tk; ++s) {
          const bool allowed = !(causal && s > t) && !(key_mask && !(*key_mask)[b * Tk + s]);
          if (!allowed) {
            row[s] = -std::numeric_limits<T>::infinity();
            continue;
          }
          const T* kv = &kd[(b * Tk + s) * d + h * dh];
          T acc = 0;
          for (std::size_t c = 0; c < dh; ++c) acc += qv[c] * kv[c];
          row[s] = acc * scl;
          mx = std::max(mx, row[s]);
        }
        T* p = &P[((b * H + h) * Tq + t) * Tk];
        if (mx == -std::numeric_limits<T>::infinity()) continue;  // nothing attendable
        T z = 0;
        for (std::size_t s = 0; s < Tk; ++s) {
          p[s] = row[s] == -std::numeric_limits<T>::infinity() ? T(0) : std::exp(row[s] - mx);
          z += p[s];
        }
        T* o = &out[(b * Tq + t) * d + h * dh];
        for (std::size_t s = 0; s < Tk; ++s) {
          p[s] /= z;
          if (p[s] == T(0)) continue;
          const T* vv = &vd[(b * Tk + s) * d + h * dh];
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[s] * vv[c];
        }
      }
    }
  }
  if (probs) *probs = P;
  return make_result<T>(
      {B, Tq, d}, std::move(out), {q, k, v},
      [q, k, v, P = std::move(P), B, Tq, Tk, d, H, dh, scl](Node<T>& self) mutable {
        const T* go = self.grad.data();
        auto qd = q.data();
        auto kd = k.data();
        auto vd = v.data();
        std::span<T> gq = q.requires_grad() ? q.grad() : std::span<T>{};
        std::span<T> gk = k.requires_grad() ? k.grad() : std::span<T>{};
        std::span<T> gv = v.requires_grad() ? v.grad() : std::span<T>{};
        std::vector<T> dp(Tk);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t t = 0; t < Tq; ++t) {
              const T* p = &P[((b * H + h) * Tq + t) * Tk];
              const T* g = &go[(b * Tq + t) * d + h * dh];
              T dot = 0;
              for (std::size_t s = 0; s < Tk; ++s) {
                dp[s] = 0;
                if (p[s] == T(0)) continue;
                const T* vv = &vd[(b * Tk + s) * d + h * dh];
                for (std::size_t c = 0; c < dh; ++c) dp[s] += g[c] * vv[c];
                dot += p[s] * dp[s];
                if (!gv.empty()) {
                  T* gvv = &gv[(b * Tk + s) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gvv[c] += p[s] * g[c];
                }
              }
              const T* qv = &qd[(b * Tq + t) * d + h * dh];
              for (std::size_t s = 0; s < Tk; ++s) {
                if (p[s] == T(0)) continue;
                const T ds = p[s] * (dp[s] - dot) * scl;
                const T* kv = &kd[(b * Tk + s) * d + h * dh];
                if (!gq.empty()) {
                  T* gqv = &gq[(b * Tq + t) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gqv[c] += ds * kv[c];
                }
                if (!gk.empty()) {
                  T* gkv = &gk[(b * Tk + s) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gkv[c] += ds * qv[c];
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> embed(const TokenBatch& tokens, const Tensor<T>& table, T factor) {
  require(table.rank() == 2, "embed: table must be [V,d]");
  require(tokens.ids.size() == tokens.rows * tokens.cols, "embed: token batch size mismatch");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<T> y(tokens.ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    const int id = tokens.ids[i];
    require(id >= 0 && static_cast<std::size_t>(id) < V, "embed: token id " + std::to_string(id) +
                                                              " out of range for vocab " + std::to_string(V));
    for (std::size_t c = 0; c < d; ++c) y[i * d + c] = td[id * d + c] * factor;
  }
  return make_result<T>({tokens.rows, tokens.cols, d}, std::move(y), {table},
                        [table, ids = tokens.ids, d, factor](Node<T>& self) mutable {
                          auto g = table.grad();
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                            for (std::size_t c = 0; c < d; ++c) g[ids[i] * d + c] += factor * self.grad[i * d + c];
                          }
                        });
}

template <typename T>
std::vector<T> sinusoid_table(std::size_t length, std::size_t d) {
  std::vector<T> pe(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      pe[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Tensor<T> positional_encode(const Tensor<T>& x) {
  require(x.rank() == 3, "positional_encode: input must be [B,T,d]");
  const std::size_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
  const auto pe = sinusoid_table<T>(L, d);
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L * d; ++i) y[b * L * d + i] += pe[i];
  }
  return make_result<T>(x.shape(), std::move(y), {x}, [x](Node<T>& self) mutable {
    auto g = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

std::size_t count_targets(const std::vector<int>& targets, int pad_id) {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [&](int t) { return t != pad_id; }));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int pad_id) {
  require(logits.rank() >= 2, "cross_entropy: logits need a class axis");
  const std::size_t V = logits.shape().back();
  const std::size_t rows = logits.size() / V;
  require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                                      std::to_string(rows) + " positions");
  const std::size_t count = count_targets(targets, pad_id);
  if (count == 0) throw std::invalid_argument("cross_entropy: no non-pad targets");
  auto ld = logits.data();
  std::vector<T> softmax(logits.size(), T(0));
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_id) continue;
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < V, "cross_entropy: target out of range");
    const T* l = &ld[r * V];
    const T mx = *std::max_element(l, l + V);
    T z = 0;
    for (std::size_t c = 0; c < V; ++c) {
      softmax[r * V + c] = std::exp(l[c] - mx);
      z += softmax[r * V + c];
    }
    for (std::size_t c = 0; c < V; ++c) softmax[r * V + c] /= z;
    total += static_cast<double>(mx + std::log(z) - l[targets[r]]);
  }
  const T mean = static_cast<T>(total / static_cast<double>(count));
  return make_result<T>({1}, {mean}, {logits},
                        [logits, targets, softmax = std::move(softmax), rows, V, count, pad_id](Node<T>& self) mutable {
                          auto g = logits.grad();
                          const T up = self.grad[0] / static_cast<T>(count);
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (targets[r] == pad_id) continue;
                            for (std::size_t c = 0; c < V; ++c) g[r * V + c] += up * softmax[r * V + c];
                            g[r * V + targets[r]] -= up;
                          }
                        });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  require(weights.size() == x.size(), "weighted_sum: weight count mismatch");
  T acc = 0;
  auto xd = x.data();
  for (std::size_t i = 0; i < weights.size(); ++i) acc += xd[i] * weights[i];
  return make_result<T>({1}, {acc}, {x}, [x, weights](Node<T>& self) mutable {
    auto g = x.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * weights[i];
  });
}

#define MOTRANS_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                                            \
  template Tensor<T> relu(const Tensor<T>&);                                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                   \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, bool,             \
                               const std::vector<std::uint8_t>*, std::vector<T>*);                          \
  template Tensor<T> embed(const TokenBatch&, const Tensor<T>&, T);                                         \
  template std::vector<T> sinusoid_table(std::size_t, std::size_t);                                         \
  template Tensor<T> positional_encode(const Tensor<T>&);                                                   \
  template Tensor<T> cross_entropy(const Tensor<T>&, const std::vector<int>&, int);                         \
  template Tensor<T> weighted_sum(const Tensor<T>&, const std::vector<T>&);

MOTRANS_INSTANTIATE_OPS(float)
MOTRANS_INSTANTIATE_OPS(double)

}  // namespace motrans::nn
