#pragma once

// Differentiable primitives for a transformer encoder. Every op checks its
// shapes up front and records a backward closure only when an input needs a
// gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Core>

#include "stanceformer/numcore/tensor.hpp"

namespace stanceformer::num {

namespace kernel {

// Dense GEMM kernels over row-major buffers, accumulating into C. Eigen does
// the blocking and vectorization; it runs single-threaded here, so results
// are deterministic for fixed shapes.
template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstView = Eigen::Map<const RowMajor<T>>;
template <typename T>
using View = Eigen::Map<RowMajor<T>>;

// C[M×N] += A[M×K] · B[K×N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  using I = Eigen::Index;
  View<T>(C, I(M), I(N)).noalias() += ConstView<T>(A, I(M), I(K)) * ConstView<T>(B, I(K), I(N));
}

// C[M×N] += A[M×K] · B[N×K]ᵀ
template <typename T>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  using I = Eigen::Index;
  View<T>(C, I(M), I(N)).noalias() += ConstView<T>(A, I(M), I(K)) * ConstView<T>(B, I(N), I(K)).transpose();
}

// C[M×N] += A[K×M]ᵀ · B[K×N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t K, std::size_t N, const T* A, const T* B, T* C) {
  using I = Eigen::Index;
  View<T>(C, I(M), I(N)).noalias() += ConstView<T>(A, I(K), I(M)).transpose() * ConstView<T>(B, I(K), I(N));
}

}  // namespace kernel

template <typename T>
void check_finite(std::span<const T> values, const char* where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << where << ": non-finite value " << values[i] << " at flat index " << i;
      throw NumericError(os.str());
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<T> out(M * N, T{0});
  kernel::gemm_nn(M, K, N, a.data().data(), b.data().data(), out.data());
  return Tensor<T>::make_result({M, N}, std::move(out), {a, b}, [M, K, N](detail::Node<T>& self) {
    const T* A = self.parents[0]->data.data();
    const T* B = self.parents[1]->data.data();
    if (parent_wants_grad(self, 0)) kernel::gemm_nt(M, N, K, self.grad.data(), B, parent_grad(self, 0).data());
    if (parent_wants_grad(self, 1)) kernel::gemm_tn(K, M, N, A, self.grad.data(), parent_grad(self, 1).data());
  });
}

// Batched a[B×M×K] · b[B×K×N].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t Bn = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  std::vector<T> out(Bn * M * N, T{0});
  for (std::size_t s = 0; s < Bn; ++s) {
    kernel::gemm_nn(M, K, N, a.data().data() + s * M * K, b.data().data() + s * K * N, out.data() + s * M * N);
  }
  return Tensor<T>::make_result({Bn, M, N}, std::move(out), {a, b}, [Bn, M, K, N](detail::Node<T>& self) {
    const T* A = self.parents[0]->data.data();
    const T* B = self.parents[1]->data.data();
    const T* G = self.grad.data();
    for (std::size_t s = 0; s < Bn; ++s) {
      if (parent_wants_grad(self, 0)) {
        kernel::gemm_nt(M, N, K, G + s * M * N, B + s * K * N, parent_grad(self, 0).data() + s * M * K);
      }
      if (parent_wants_grad(self, 1)) {
        kernel::gemm_tn(K, M, N, A + s * M * K, G + s * M * N, parent_grad(self, 1).data() + s * K * N);
      }
    }
  });
}

// Batched a[B×M×K] · b[B×N×K]ᵀ.
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw DimensionError("bmm_nt: cannot multiply " + to_string(a.shape()) + " by transpose of " +
                         to_string(b.shape()));
  }
  const std::size_t Bn = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
  std::vector<T> out(Bn * M * N, T{0});
  for (std::size_t s = 0; s < Bn; ++s) {
    kernel::gemm_nt(M, K, N, a.data().data() + s * M * K, b.data().data() + s * N * K, out.data() + s * M * N);
  }
  return Tensor<T>::make_result({Bn, M, N}, std::move(out), {a, b}, [Bn, M, K, N](detail::Node<T>& self) {
    const T* A = self.parents[0]->data.data();
    const T* B = self.parents[1]->data.data();
    const T* G = self.grad.data();
    for (std::size_t s = 0; s < Bn; ++s) {
      if (parent_wants_grad(self, 0)) {
        kernel::gemm_nn(M, N, K, G + s * M * N, B + s * N * K, parent_grad(self, 0).data() + s * M * K);
      }
      if (parent_wants_grad(self, 1)) {
        kernel::gemm_tn(N, M, K, G + s * M * N, A + s * M * K, parent_grad(self, 1).data() + s * N * K);
      }
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!parent_wants_grad(self, p)) continue;
      auto& g = parent_grad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

// x[..., n] + bias[n], broadcast over leading dimensions.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t n = x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not match last dim of " +
                         to_string(x.shape()));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const T* bd = bias.data().data();
  const std::size_t rows = out.size() / n;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bd[j];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, bias}, [n, rows](detail::Node<T>& self) {
    if (parent_wants_grad(self, 0)) {
      auto& g = parent_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (parent_wants_grad(self, 1)) {
      auto& g = parent_grad(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * xd[i] * (T(1) + std::erf(xd[i] * inv_sqrt2));
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [inv_sqrt2](detail::Node<T>& self) {
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
    const auto& xv = self.parents[0]->data;
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * xv[i] * xv[i]);
      g[i] += self.grad[i] * (cdf + xv[i] * pdf);
    }
  });
}

// Softmax over the last dimension with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const std::size_t c = logits.shape().back();
  const std::size_t rows = logits.size() / c;
  auto in = logits.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (std::isnan(in[i])) {
      std::ostringstream os;
      os << "softmax_rows: NaN logit at row " << i / c << ", column " << i % c;
      throw NumericError(os.str());
    }
  }
  std::vector<T> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in.data() + r * c;
    T* y = out.data() + r * c;
    const T mx = *std::max_element(x, x + c);
    T sum{0};
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= sum;
  }
  return Tensor<T>::make_result(logits.shape(), std::move(out), {logits}, [c, rows](detail::Node<T>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * c;
      const T* dy = self.grad.data() + r * c;
      T dot{0};
      for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      T* dx = g.data() + r * c;
      for (std::size_t j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

// Normalizes each row of the last dimension (biased variance, eps inside the
// square root) then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.shape().back();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != d || beta.dim(0) != d) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " + to_string(beta.shape()) +
                         " do not match last dim of " + to_string(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xd.data() + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= T(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (xr[j] - mean) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        const auto& gam = self.parents[1]->data;
        const T* dy = self.grad.data();
        if (parent_wants_grad(self, 1)) {
          auto& gg = parent_grad(self, 1);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += dy[r * d + j] * xhat[r * d + j];
        }
        if (parent_wants_grad(self, 2)) {
          auto& gb = parent_grad(self, 2);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += dy[r * d + j];
        }
        if (parent_wants_grad(self, 0)) {
          auto& gx = parent_grad(self, 0);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_dh{0}, sum_dh_h{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy[r * d + j] * gam[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = dy[r * d + j] * gam[j];
              gx[r * d + j] += inv_std[r] * (dh - sum_dh / T(d) - xhat[r * d + j] * sum_dh_h / T(d));
            }
          }
        }
      });
}

// Gathers rows of table[V×d]; backward scatters into the touched rows.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) throw DimensionError("embedding: table must be 2-D, got " + to_string(table.shape()));
  const std::size_t V = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  std::vector<T> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      std::ostringstream os;
      os << "embedding: id " << ids[i] << " outside table of " << V << " rows";
      throw DimensionError(os.str());
    }
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return Tensor<T>::make_result({ids.size(), d}, std::move(out), {table},
                                [d, saved = std::move(saved)](detail::Node<T>& self) {
                                  auto& g = parent_grad(self, 0);
                                  for (std::size_t i = 0; i < saved.size(); ++i) {
                                    T* row = g.data() + static_cast<std::size_t>(saved[i]) * d;
                                    const T* src = self.grad.data() + i * d;
                                    for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
                                  }
                                });
}

// Inverted dropout. The mask is drawn from `rng` in element order, so a seeded
// generator reproduces it exactly.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw UsageError("dropout: rate must be below 1");
  const T keep_scale = T(1) / T(1.0 - p);
  std::vector<T> mask(x.size());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < p ? T{0} : keep_scale;
  }
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node<T>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

// [(B·S)×(H·dk)] → [(B·H)×S×dk]: one slice per (example, head).
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t batch, std::size_t seq, std::size_t heads) {
  if (x.rank() != 2 || x.dim(0) != batch * seq || x.dim(1) % heads != 0) {
    std::ostringstream os;
    os << "split_heads: " << to_string(x.shape()) << " incompatible with batch=" << batch << " seq=" << seq
       << " heads=" << heads;
    throw DimensionError(os.str());
  }
  const std::size_t width = x.dim(1), dk = width / heads;
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t s = 0; s < seq; ++s)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.data() + (b * seq + s) * width + h * dk, dk, out.data() + ((b * heads + h) * seq + s) * dk);
  return Tensor<T>::make_result({batch * heads, seq, dk}, std::move(out), {x},
                                [batch, seq, heads, dk, width](detail::Node<T>& self) {
                                  auto& g = parent_grad(self, 0);
                                  for (std::size_t b = 0; b < batch; ++b)
                                    for (std::size_t s = 0; s < seq; ++s)
                                      for (std::size_t h = 0; h < heads; ++h) {
                                        const T* src = self.grad.data() + ((b * heads + h) * seq + s) * dk;
                                        T* dst = g.data() + (b * seq + s) * width + h * dk;
                                        for (std::size_t j = 0; j < dk; ++j) dst[j] += src[j];
                                      }
                                });
}

// Inverse of split_heads.
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t batch, std::size_t heads) {
  if (x.rank() != 3 || x.dim(0) != batch * heads) {
    std::ostringstream os;
    os << "merge_heads: " << to_string(x.shape()) << " incompatible with batch=" << batch << " heads=" << heads;
    throw DimensionError(os.str());
  }
  const std::size_t seq = x.dim(1), dk = x.dim(2), width = heads * dk;
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t s = 0; s < seq; ++s)
        std::copy_n(xd.data() + ((b * heads + h) * seq + s) * dk, dk, out.data() + (b * seq + s) * width + h * dk);
  return Tensor<T>::make_result({batch * seq, width}, std::move(out), {x},
                                [batch, seq, heads, dk, width](detail::Node<T>& self) {
                                  auto& g = parent_grad(self, 0);
                                  for (std::size_t b = 0; b < batch; ++b)
                                    for (std::size_t h = 0; h < heads; ++h)
                                      for (std::size_t s = 0; s < seq; ++s) {
                                        const T* src = self.grad.data() + (b * seq + s) * width + h * dk;
                                        T* dst = g.data() + ((b * heads + h) * seq + s) * dk;
                                        for (std::size_t j = 0; j < dk; ++j) dst[j] += src[j];
                                      }
                                });
}

// Rows 0, stride, 2·stride, … of x[N×d]; used for [CLS] pooling.
template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, std::size_t stride) {
  if (x.rank() != 2 || stride == 0 || x.dim(0) % stride != 0) {
    std::ostringstream os;
    os << "select_rows: " << to_string(x.shape()) << " not divisible into blocks of " << stride;
    throw DimensionError(os.str());
  }
  const std::size_t n = x.dim(0) / stride, d = x.dim(1);
  std::vector<T> out(n * d);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xd.data() + i * stride * d, d, out.data() + i * d);
  return Tensor<T>::make_result({n, d}, std::move(out), {x}, [n, d, stride](detail::Node<T>& self) {
    auto& g = parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * stride * d + j] += self.grad[i * d + j];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result({1}, {acc}, {x}, [](detail::Node<T>& self) {
    auto& g = parent_grad(self, 0);
    for (auto& v : g) v += self.grad[0];
  });
}

// Mean negative log-softmax probability of the true class.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    std::ostringstream os;
    os << "cross_entropy: logits " << to_string(logits.shape()) << " vs " << labels.size() << " labels";
    throw DimensionError(os.str());
  }
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      std::ostringstream os;
      os << "cross_entropy: label " << labels[i] << " at row " << i << " outside [0," << c << ")";
      throw DataError(os.str());
    }
  }
  auto x = logits.data();
  std::vector<T> probs(n * c);
  T loss{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.data() + i * c;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    const T mx = row[arg];
    // log1p keeps a confident correct prediction's loss positive instead of 0.
    T rest{0};
    for (std::size_t j = 0; j < c; ++j)
      if (j != arg) rest += std::exp(row[j] - mx);
    const T log_z_rel = std::log1p(rest);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx - log_z_rel);
    loss += log_z_rel + (mx - row[labels[i]]);
  }
  loss /= T(n);
  check_finite<T>(std::span<const T>(&loss, 1), "cross_entropy");
  std::vector<std::int32_t> saved(labels.begin(), labels.end());
  return Tensor<T>::make_result(
      {1}, {loss}, {logits}, [n, c, probs = std::move(probs), saved = std::move(saved)](detail::Node<T>& self) {
        auto& g = parent_grad(self, 0);
        const T s = self.grad[0] / T(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j)
            g[i * c + j] += s * (probs[i * c + j] - (static_cast<std::int32_t>(j) == saved[i] ? T(1) : T(0)));
      });
}

}  // namespace stanceformer::num
