#include "repdiff/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace repdiff {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
  throw std::invalid_argument(std::string(op) + ": unsupported shape " + a.shape_str());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// C[m,n] += A[m,k] * B[k,n]
void mm_accum(const double* __restrict__ A, const double* __restrict__ B,
              double* __restrict__ C, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[l];
      const double* b = B + l * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// GA[m,k] += G[m,n] * B^T, i.e. GA[i,l] += sum_j G[i,j] B[l,j].
// The dot product runs over eight explicit lanes; the order is fixed by the
// code, so results stay deterministic while the loop vectorizes.
void mm_accum_bt(const double* __restrict__ G, const double* __restrict__ B,
                 double* __restrict__ GA, std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t n8 = n - n % 8;
  for (std::size_t i = 0; i < m; ++i) {
    const double* g = G + i * n;
    double* ga = GA + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double* b = B + l * n;
      double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (std::size_t j = 0; j < n8; j += 8)
        for (std::size_t u = 0; u < 8; ++u) lane[u] += g[j + u] * b[j + u];
      double acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                   ((lane[4] + lane[5]) + (lane[6] + lane[7]));
      for (std::size_t j = n8; j < n; ++j) acc += g[j] * b[j];
      ga[l] += acc;
    }
  }
}

// GB[k,n] += A^T * G, i.e. GB[l,j] += sum_i A[i,l] G[i,j]
void mm_accum_at(const double* __restrict__ A, const double* __restrict__ G,
                 double* __restrict__ GB, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    const double* g = G + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = a[l];
      double* gb = GB + l * n;
      for (std::size_t j = 0; j < n; ++j) gb[j] += av * g[j];
    }
  }
}

}  // namespace

const Tensor& Var::value() const { return g_->value(*this); }
const Tensor& Var::grad() const { return g_->grad(*this); }

Var Graph::emit(Tensor value, std::function<void(Graph&, std::size_t)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) { return emit(std::move(value), nullptr); }

Var Graph::add(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (!x.same_shape(y)) shape_error("add", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out), [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    Tensor& gb = g.grad_of(ib);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (!x.same_shape(y)) shape_error("sub", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out), [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    Tensor& gb = g.grad_of(ib);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] -= go[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (!x.same_shape(y)) shape_error("mul", x, y);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out), [ia, ib](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.value_of(ia);
    const Tensor& y = g.value_of(ib);
    Tensor& ga = g.grad_of(ia);
    Tensor& gb = g.grad_of(ib);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i] * y[i];
      gb[i] += go[i] * x[i];
    }
  });
}

Var Graph::scale(Var a, double s) {
  Tensor out = value_of(a.id_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia, s](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
  });
}

Var Graph::add_scalar(Var a, double s) {
  Tensor out = value_of(a.id_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Graph::add_rowvec(Var m, Var row) {
  const Tensor& x = value_of(m.id_);
  const Tensor& v = value_of(row.id_);
  if (x.rank() != 2 || v.rank() != 1 || x.cols() != v.size()) shape_error("add_rowvec", x, v);
  Tensor out = x;
  const std::size_t B = x.rows(), C = x.cols();
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] += v[j];
  const std::size_t im = m.id_, iv = row.id_;
  return emit(std::move(out), [im, iv, B, C](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& gm = g.grad_of(im);
    Tensor& gv = g.grad_of(iv);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        gm[i * C + j] += go[i * C + j];
        gv[j] += go[i * C + j];
      }
  });
}

Var Graph::scale_rows(Var m, Var v) {
  const Tensor& x = value_of(m.id_);
  const Tensor& w = value_of(v.id_);
  if (x.rank() != 2 || w.rank() != 1 || x.rows() != w.size()) shape_error("scale_rows", x, w);
  const std::size_t B = x.rows(), C = x.cols();
  Tensor out = x;
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] *= w[i];
  const std::size_t im = m.id_, iv = v.id_;
  return emit(std::move(out), [im, iv, B, C](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.value_of(im);
    const Tensor& w = g.value_of(iv);
    Tensor& gm = g.grad_of(im);
    Tensor& gv = g.grad_of(iv);
    for (std::size_t i = 0; i < B; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < C; ++j) {
        gm[i * C + j] += go[i * C + j] * w[i];
        acc += go[i * C + j] * x[i * C + j];
      }
      gv[i] += acc;
    }
  });
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) shape_error("matmul", x, y);
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out = Tensor::zeros(m, n);
  mm_accum(x.data(), y.data(), out.data(), m, k, n);
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out), [ia, ib, m, k, n](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.value_of(ia);
    const Tensor& y = g.value_of(ib);
    mm_accum_bt(go.data(), y.data(), g.grad_of(ia).data(), m, k, n);
    mm_accum_at(x.data(), go.data(), g.grad_of(ib).data(), m, k, n);
  });
}

Var Graph::sum(Var a) {
  const Tensor& x = value_of(a.id_);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const std::size_t ia = a.id_;
  return emit(Tensor::scalar(s), [ia](Graph& g, std::size_t self) {
    const double go = g.grad_of(self)[0];
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var Graph::mean(Var a) {
  const Tensor& x = value_of(a.id_);
  if (x.size() == 0) shape_error("mean", x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  const double inv = 1.0 / static_cast<double>(x.size());
  const std::size_t ia = a.id_;
  return emit(Tensor::scalar(s * inv), [ia, inv](Graph& g, std::size_t self) {
    const double go = g.grad_of(self)[0] * inv;
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go;
  });
}

Var Graph::sum_axis(Var a, int axis) {
  const Tensor& x = value_of(a.id_);
  if (x.rank() != 2 || (axis != 0 && axis != 1)) shape_error("sum_axis", x);
  const std::size_t B = x.rows(), C = x.cols();
  Tensor out = axis == 0 ? Tensor::zeros(C) : Tensor::zeros(B);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < C; ++j) out[axis == 0 ? j : i] += x[i * C + j];
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia, axis, B, C](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < C; ++j) ga[i * C + j] += go[axis == 0 ? j : i];
  });
}

Var Graph::mean_axis(Var a, int axis) {
  const Tensor& x = value_of(a.id_);
  if (x.rank() != 2 || (axis != 0 && axis != 1)) shape_error("mean_axis", x);
  const double inv = 1.0 / static_cast<double>(axis == 0 ? x.rows() : x.cols());
  return scale(sum_axis(a, axis), inv);
}

Var Graph::tanh(Var a) {
  Tensor out = value_of(a.id_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.value_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - y[i] * y[i]);
  });
}

Var Graph::silu(Var a) {
  const Tensor& x = value_of(a.id_);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.value_of(ia);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const double s = sigmoid(x[i]);
      ga[i] += go[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Var Graph::exp(Var a) {
  Tensor out = value_of(a.id_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.value_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
  });
}

Var Graph::log(Var a) {
  const Tensor& x = value_of(a.id_);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0))
      throw std::domain_error("log: nonpositive input " + std::to_string(x[i]));
    out[i] = std::log(x[i]);
  }
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.value_of(ia);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / x[i];
  });
}

Var Graph::sqrt(Var a) {
  const Tensor& x = value_of(a.id_);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x[i] < 0.0) throw std::domain_error("sqrt: negative input " + std::to_string(x[i]));
    out[i] = std::sqrt(x[i]);
  }
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.value_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * 0.5 / y[i];
  });
}

Var Graph::concat_cols(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (x.rank() == 1 && y.rank() == 1) {
    Tensor out = Tensor::zeros(x.size() + y.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
    for (std::size_t i = 0; i < y.size(); ++i) out[x.size() + i] = y[i];
    const std::size_t ia = a.id_, ib = b.id_, na = x.size(), nb = y.size();
    return emit(std::move(out), [ia, ib, na, nb](Graph& g, std::size_t self) {
      const Tensor& go = g.grad_of(self);
      Tensor& ga = g.grad_of(ia);
      Tensor& gb = g.grad_of(ib);
      for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
      for (std::size_t i = 0; i < nb; ++i) gb[i] += go[na + i];
    });
  }
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) shape_error("concat_cols", x, y);
  const std::size_t B = x.rows(), Ca = x.cols(), Cb = y.cols();
  Tensor out = Tensor::zeros(B, Ca + Cb);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < Ca; ++j) out[i * (Ca + Cb) + j] = x[i * Ca + j];
    for (std::size_t j = 0; j < Cb; ++j) out[i * (Ca + Cb) + Ca + j] = y[i * Cb + j];
  }
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out), [ia, ib, B, Ca, Cb](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    Tensor& gb = g.grad_of(ib);
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < Ca; ++j) ga[i * Ca + j] += go[i * (Ca + Cb) + j];
      for (std::size_t j = 0; j < Cb; ++j) gb[i * Cb + j] += go[i * (Ca + Cb) + Ca + j];
    }
  });
}

Var Graph::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Tensor& x = value_of(a.id_);
  if (c0 >= c1) throw std::invalid_argument("slice_cols: empty range");
  if (x.rank() == 1) {
    if (c1 > x.size()) shape_error("slice_cols", x);
    Tensor out = Tensor::zeros(c1 - c0);
    for (std::size_t i = c0; i < c1; ++i) out[i - c0] = x[i];
    const std::size_t ia = a.id_;
    return emit(std::move(out), [ia, c0, c1](Graph& g, std::size_t self) {
      const Tensor& go = g.grad_of(self);
      Tensor& ga = g.grad_of(ia);
      for (std::size_t i = c0; i < c1; ++i) ga[i] += go[i - c0];
    });
  }
  if (x.rank() != 2 || c1 > x.cols()) shape_error("slice_cols", x);
  const std::size_t B = x.rows(), C = x.cols(), W = c1 - c0;
  Tensor out = Tensor::zeros(B, W);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < W; ++j) out[i * W + j] = x[i * C + c0 + j];
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia, B, C, c0, W](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < W; ++j) ga[i * C + c0 + j] += go[i * W + j];
  });
}

Var Graph::reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = value_of(a.id_).reshaped(std::move(shape));
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

Var Graph::gather_rows(Var table, std::vector<int> idx) {
  const Tensor& x = value_of(table.id_);
  if (x.rank() != 2) shape_error("gather_rows", x);
  const std::size_t C = x.cols();
  Tensor out = Tensor::zeros(idx.size(), C);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= x.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) + " out of " +
                              std::to_string(x.rows()));
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] = x[idx[i] * C + j];
  }
  const std::size_t it = table.id_;
  return emit(std::move(out), [it, idx = std::move(idx), C](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    Tensor& gt = g.grad_of(it);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < C; ++j) gt[idx[i] * C + j] += go[i * C + j];
  });
}

Var Graph::l2_normalize(Var a) {
  const Tensor& x = value_of(a.id_);
  const std::size_t B = x.rank() == 2 ? x.rows() : 1;
  const std::size_t C = x.rank() == 2 ? x.cols() : x.size();
  Tensor out = x;
  std::vector<double> norms(B);
  for (std::size_t i = 0; i < B; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < C; ++j) s += x[i * C + j] * x[i * C + j];
    const double n = std::sqrt(s);
    if (n == 0.0) throw std::domain_error("l2_normalize: zero-norm input");
    norms[i] = n;
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] /= n;
  }
  const std::size_t ia = a.id_;
  return emit(std::move(out), [ia, B, C, norms = std::move(norms)](Graph& g, std::size_t self) {
    const Tensor& go = g.grad_of(self);
    const Tensor& y = g.value_of(self);
    Tensor& ga = g.grad_of(ia);
    for (std::size_t i = 0; i < B; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < C; ++j) dot += go[i * C + j] * y[i * C + j];
      for (std::size_t j = 0; j < C; ++j)
        ga[i * C + j] += (go[i * C + j] - dot * y[i * C + j]) / norms[i];
    }
  });
}

Var Graph::cosine_similarity(Var a, Var b) {
  const Tensor& x = value_of(a.id_);
  const Tensor& y = value_of(b.id_);
  if (!x.same_shape(y)) shape_error("cosine_similarity", x, y);
  const std::size_t B = x.rank() == 2 ? x.rows() : 1;
  const std::size_t C = x.rank() == 2 ? x.cols() : x.size();
  Tensor out = x.rank() == 2 ? Tensor::zeros(B) : Tensor::scalar(0.0);
  std::vector<double> nx(B), ny(B);
  for (std::size_t i = 0; i < B; ++i) {
    double sx = 0.0, sy = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < C; ++j) {
      sx += x[i * C + j] * x[i * C + j];
      sy += y[i * C + j] * y[i * C + j];
      dot += x[i * C + j] * y[i * C + j];
    }
    nx[i] = std::sqrt(sx);
    ny[i] = std::sqrt(sy);
    if (nx[i] == 0.0 || ny[i] == 0.0)
      throw std::domain_error("cosine_similarity: zero-norm input");
    out[i] = dot / (nx[i] * ny[i]);
  }
  const std::size_t ia = a.id_, ib = b.id_;
  return emit(std::move(out),
              [ia, ib, B, C, nx = std::move(nx), ny = std::move(ny)](Graph& g, std::size_t self) {
                const Tensor& go = g.grad_of(self);
                const Tensor& s = g.value_of(self);
                const Tensor& x = g.value_of(ia);
                const Tensor& y = g.value_of(ib);
                Tensor& ga = g.grad_of(ia);
                Tensor& gb = g.grad_of(ib);
                for (std::size_t i = 0; i < B; ++i) {
                  const double gi = go[i];
                  for (std::size_t j = 0; j < C; ++j) {
                    const double xv = x[i * C + j], yv = y[i * C + j];
                    ga[i * C + j] +=
                        gi * (yv / (nx[i] * ny[i]) - s[i] * xv / (nx[i] * nx[i]));
                    gb[i * C + j] +=
                        gi * (xv / (nx[i] * ny[i]) - s[i] * yv / (ny[i] * ny[i]));
                  }
                }
              });
}

void Graph::backward(const Var& root) {
  if (root.g_ != this) throw std::invalid_argument("backward: root from another graph");
  const Tensor& rv = nodes_[root.id_].value;
  if (rv.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " + rv.shape_str());
  for (auto& n : nodes_) n.grad = Tensor::zeros_like(n.value);
  nodes_[root.id_].grad[0] = 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  auto eval = [&f](const Tensor& p) {
    Graph g;
    Var x = g.leaf(p);
    const double v = f(g, x).value().item();
    if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite evaluation");
    return v;
  };

  Graph g;
  Var x = g.leaf(point);
  Var root = f(g, x);
  if (!root.value().all_finite()) throw std::domain_error("grad_check: non-finite evaluation");
  g.backward(root);
  const Tensor ad = x.grad();

  auto fd_at = [&](double h) {
    Tensor fd = point;
    Tensor p = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double fp = eval(p);
      p[i] = orig - h;
      const double fm = eval(p);
      p[i] = orig;
      fd[i] = (fp - fm) / (2.0 * h);
    }
    return fd;
  };

  const Tensor fd = fd_at(step);
  GradCheckReport rep;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double err = std::abs(ad[i] - fd[i]) / std::max(1.0, std::abs(fd[i]));
    rep.max_rel_err = std::max(rep.max_rel_err, err);
  }

  // A second evaluation at half step flags points where the difference
  // quotient is not converging (kinks, curvature blowups): central
  // differences are only trustworthy when halving the step barely moves them.
  // Drift is measured on the scale of the quotients themselves, with an
  // absolute guard so plain round-off noise is not flagged.
  const Tensor fd_half = fd_at(step * 0.5);
  const double f0 = std::abs(eval(point));
  double drift = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double d = std::abs(fd[i] - fd_half[i]);
    const double scale = std::max(std::abs(fd[i]), std::abs(fd_half[i]));
    if (d > 1e-3 * scale && d > 1e-7 * std::max(1.0, f0)) drift = std::max(drift, d / scale);
  }
  if (drift > 0.0) {
    rep.unreliable = true;
    rep.note = "finite differences unstable under step halving (relative drift " +
               std::to_string(drift) + "); value may be non-differentiable here";
  }
  return rep;
}

}  // namespace repdiff
