// Copyright 2026 The TSA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tsa/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace tsa::ag {

// ---- Tape ------------------------------------------------------------------

template <class T>
Var<T> Tape<T>::constant(Matrix<T> v) {
  auto& n = nodes_.emplace_back();
  n.owned = std::move(v);
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::parameter(Parameter<T>& p, bool requires_grad) {
  auto& n = nodes_.emplace_back();
  n.borrowed = &p.value;
  n.requires_grad = requires_grad;
  n.param = requires_grad ? &p : nullptr;
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(Matrix<T> value, std::span<const Var<T>> inputs, Backward fn) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape != this) throw std::logic_error("variable from a different tape");
    needs = needs || nodes_[in.id].requires_grad;
  }
  auto& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return {this, nodes_.size() - 1};
}

template <class T>
const Matrix<T>& Tape<T>::value(std::size_t id) const {
  const auto& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

template <class T>
Matrix<T>& Tape<T>::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) {
    const auto& v = value(id);
    n.grad = Matrix<T>(v.rows(), v.cols());
  }
  return n.grad;
}

template <class T>
void Tape<T>::backward(std::span<const std::pair<Var<T>, T>> seeds) {
  for (const auto& [root, w] : seeds) {
    if (root.tape != this) throw std::logic_error("seed from a different tape");
    if (root.rows() != 1 || root.cols() != 1) {
      throw std::invalid_argument("backward: root must be a scalar");
    }
    if (!nodes_[root.id].requires_grad) continue;
    grad(root.id)(0, 0) += w;
  }
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    auto& n = nodes_[id];
    if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    auto& pg = n.param->grad;
    if (!pg.same_shape(n.param->value)) pg = Matrix<T>(n.param->value.rows(), n.param->value.cols());
    kernels::axpy(T(1), n.grad.data(), pg.data(), pg.size());
  }
}

// ---- Operations ------------------------------------------------------------

namespace {

template <class T>
void add_into(Tape<T>& t, Var<T> dst, const Matrix<T>& src, T scale = T(1)) {
  if (!t.requires_grad(dst.id)) return;
  auto& g = t.grad(dst.id);
  kernels::axpy(scale, src.data(), g.data(), g.size());
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& t = *a.tape;
  Matrix<T> c = tsa::matmul(a.value(), b.value());
  const Var<T> ins[] = {a, b};
  return t.record(std::move(c), ins, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& dc = tp.grad(self);
    const auto& av = a.value();
    const auto& bv = b.value();
    const auto& k = kernels::active<T>();
    if (tp.requires_grad(a.id)) {
      auto& da = tp.grad(a.id);
      k.gemm_nt(av.rows(), av.cols(), bv.cols(), dc.data(), dc.cols(), bv.data(),
                bv.cols(), da.data(), da.cols());
    }
    if (tp.requires_grad(b.id)) {
      auto& db = tp.grad(b.id);
      k.gemm_tn(bv.rows(), bv.cols(), av.rows(), av.data(), av.cols(), dc.data(),
                dc.cols(), db.data(), db.cols());
    }
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (!a.value().same_shape(b.value())) throw std::invalid_argument("add: shape mismatch");
  Matrix<T> c = a.value();
  kernels::axpy(T(1), b.value().data(), c.data(), c.size());
  const Var<T> ins[] = {a, b};
  return a.tape->record(std::move(c), ins, [a, b](Tape<T>& tp, std::size_t self) {
    const auto& dc = tp.grad(self);
    add_into(tp, a, dc);
    add_into(tp, b, dc);
  });
}

template <class T>
Var<T> add_row_bias(Var<T> x, Var<T> bias) {
  const auto& xv = x.value();
  require_shape(bias.value(), 1, xv.cols(), "add_row_bias");
  Matrix<T> y = xv;
  for (std::size_t r = 0; r < y.rows(); ++r)
    kernels::axpy(T(1), bias.value().data(), y.data() + r * y.cols(), y.cols());
  const Var<T> ins[] = {x, bias};
  return x.tape->record(std::move(y), ins, [x, bias](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    add_into(tp, x, dy);
    if (tp.requires_grad(bias.id)) {
      auto& db = tp.grad(bias.id);
      for (std::size_t r = 0; r < dy.rows(); ++r)
        kernels::axpy(T(1), dy.data() + r * dy.cols(), db.data(), db.cols());
    }
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  Matrix<T> y = x.value();
  for (auto& v : y.storage()) v = v > T(0) ? v : T(0);
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(y), ins, [x](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    const auto& xv = x.value();
    auto& dx = tp.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xv.data()[i] > T(0)) dx.data()[i] += dy.data()[i];
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Matrix<T> y = x.value();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : y.storage()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(y), ins, [x, inv_sqrt2](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    const auto& xv = x.value();
    auto& dx = tp.grad(x.id);
    const T inv_sqrt2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T z = xv.data()[i];
      const T cdf = T(0.5) * (T(1) + std::erf(z * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * z * z);
      dx.data()[i] += dy.data()[i] * (cdf + z * pdf);
    }
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require_shape(gamma.value(), 1, cols, "layer_norm gamma");
  require_shape(beta.value(), 1, cols, "layer_norm beta");
  auto xhat = std::make_shared<Matrix<T>>(rows, cols);
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Matrix<T> y(rows, cols);
  const T* g = gamma.value().data();
  const T* bt = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= T(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= T(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (xr[c] - mean) * rs;
      (*xhat)(r, c) = h;
      y(r, c) = h * g[c] + bt[c];
    }
  }
  const Var<T> ins[] = {x, gamma, beta};
  return x.tape->record(std::move(y), ins,
                        [x, gamma, beta, xhat, rstd](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    const std::size_t rows = dy.rows(), cols = dy.cols();
    const T* g = gamma.value().data();
    if (tp.requires_grad(gamma.id) || tp.requires_grad(beta.id)) {
      Matrix<T> dg(1, cols), db(1, cols);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          dg(0, c) += dy(r, c) * (*xhat)(r, c);
          db(0, c) += dy(r, c);
        }
      add_into(tp, gamma, dg);
      add_into(tp, beta, db);
    }
    if (!tp.requires_grad(x.id)) return;
    auto& dx = tp.grad(x.id);
    std::vector<T> dh(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      T mean_dh = 0, mean_dh_h = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        dh[c] = dy(r, c) * g[c];
        mean_dh += dh[c];
        mean_dh_h += dh[c] * (*xhat)(r, c);
      }
      mean_dh /= T(cols);
      mean_dh_h /= T(cols);
      for (std::size_t c = 0; c < cols; ++c)
        dx(r, c) += (*rstd)[r] * (dh[c] - mean_dh - (*xhat)(r, c) * mean_dh_h);
    }
  });
}

template <class T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> rows) {
  const auto& xv = x.value();
  Matrix<T> y(rows.size(), xv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw std::out_of_range("gather_rows: row index out of range");
    std::copy(xv.row(rows[i]).begin(), xv.row(rows[i]).end(), y.row(i).begin());
  }
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(y), ins, [x, rows = std::move(rows)](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    auto& dx = tp.grad(x.id);
    for (std::size_t i = 0; i < rows.size(); ++i)
      kernels::axpy(T(1), dy.data() + i * dy.cols(), dx.data() + rows[i] * dx.cols(), dx.cols());
  });
}

template <class T>
Var<T> l2_normalize_rows(Var<T> x) {
  const auto& xv = x.value();
  auto norms = std::make_shared<std::vector<T>>(xv.rows());
  auto y = std::make_shared<Matrix<T>>(xv);
  for (std::size_t r = 0; r < y->rows(); ++r) {
    const T n = row_norm<T>(xv.row(r));
    if (!std::isfinite(n)) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) + " is not finite");
    }
    if (!(n > T(1e-12))) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) +
                              " has near-zero norm");
    }
    (*norms)[r] = n;
    for (auto& v : y->row(r)) v /= n;
  }
  const Var<T> ins[] = {x};
  return x.tape->record(Matrix<T>(*y), ins, [x, y, norms](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    auto& dx = tp.grad(x.id);
    const std::size_t cols = y->cols();
    for (std::size_t r = 0; r < y->rows(); ++r) {
      const T* yr = y->data() + r * cols;
      const T* dyr = dy.data() + r * cols;
      const T proj = kernels::dot(yr, dyr, cols);
      const T inv = T(1) / (*norms)[r];
      for (std::size_t c = 0; c < cols; ++c) dx(r, c) += (dyr[c] - yr[c] * proj) * inv;
    }
  });
}

template <class T>
Var<T> spmm(const Csr<T>& s, Var<T> x) {
  Matrix<T> y = tsa::spmm(s, x.value());
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(y), ins, [&s, x](Tape<T>& tp, std::size_t self) {
    spmm_transpose_acc(s, tp.grad(self), tp.grad(x.id));
  });
}

template <class T>
Var<T> stop_gradient(Var<T> x) {
  return x.tape->constant(x.value());
}

template <class T>
Var<T> segment_mean(Var<T> x, std::vector<std::size_t> starts, std::vector<std::size_t> counts) {
  const auto& xv = x.value();
  if (starts.size() != counts.size()) throw std::invalid_argument("segment_mean: size mismatch");
  Matrix<T> y(starts.size(), xv.cols());
  for (std::size_t s = 0; s < starts.size(); ++s) {
    if (counts[s] == 0 || starts[s] + counts[s] > xv.rows())
      throw std::out_of_range("segment_mean: bad segment");
    const T w = T(1) / T(counts[s]);
    for (std::size_t r = starts[s]; r < starts[s] + counts[s]; ++r)
      kernels::axpy(w, xv.data() + r * xv.cols(), y.data() + s * y.cols(), y.cols());
  }
  const Var<T> ins[] = {x};
  return x.tape->record(std::move(y), ins,
                        [x, starts = std::move(starts), counts = std::move(counts)](Tape<T>& tp, std::size_t self) {
    const auto& dy = tp.grad(self);
    auto& dx = tp.grad(x.id);
    for (std::size_t s = 0; s < starts.size(); ++s) {
      const T w = T(1) / T(counts[s]);
      for (std::size_t r = starts[s]; r < starts[s] + counts[s]; ++r)
        kernels::axpy(w, dy.data() + s * dy.cols(), dx.data() + r * dx.cols(), dx.cols());
    }
  });
}

template <class T>
Var<T> masked_self_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t seq_len,
                             std::vector<std::size_t> valid_lengths, std::size_t heads) {
  const auto& qv = q.value();
  const std::size_t width = qv.cols();
  const std::size_t batch = valid_lengths.size();
  if (heads == 0 || width % heads != 0)
    throw std::invalid_argument("masked_self_attention: width not divisible by heads");
  if (qv.rows() != batch * seq_len || !qv.same_shape(k.value()) || !qv.same_shape(v.value()))
    throw std::invalid_argument("masked_self_attention: q/k/v shape mismatch");
  const std::size_t dh = width / heads;
  const T scale = T(1) / std::sqrt(T(dh));
  const auto& kt = kernels::active<T>();

  // Softmax weights per (sequence, head), each seq_len x valid_len.
  auto probs = std::make_shared<std::vector<Matrix<T>>>(batch * heads);
  Matrix<T> out(qv.rows(), width);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = valid_lengths[b];
    if (len == 0 || len > seq_len)
      throw std::invalid_argument("masked_self_attention: invalid sequence length");
    const std::size_t base = b * seq_len * width;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = base + h * dh;
      Matrix<T> p(seq_len, len);
      kt.gemm_nt(seq_len, len, dh, qv.data() + off, width, k.value().data() + off,
                 width, p.data(), len);
      for (std::size_t i = 0; i < seq_len; ++i) {
        T* pr = p.data() + i * len;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          pr[j] *= scale;
          mx = std::max(mx, pr[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < len; ++j) {
          pr[j] = std::exp(pr[j] - mx);
          sum += pr[j];
        }
        for (std::size_t j = 0; j < len; ++j) pr[j] /= sum;
      }
      kt.gemm_nn(seq_len, dh, len, p.data(), len, v.value().data() + off, width,
                 out.data() + off, width);
      (*probs)[b * heads + h] = std::move(p);
    }
  }
  const Var<T> ins[] = {q, k, v};
  return q.tape->record(std::move(out), ins,
                        [q, k, v, seq_len, heads, dh, scale, probs,
                         lens = std::move(valid_lengths)](Tape<T>& tp, std::size_t self) {
    const auto& kt = kernels::active<T>();
    const auto& dout = tp.grad(self);
    const std::size_t width = dout.cols();
    const bool gq = tp.requires_grad(q.id), gk = tp.requires_grad(k.id),
               gv = tp.requires_grad(v.id);
    T* dq = gq ? tp.grad(q.id).data() : nullptr;
    T* dk = gk ? tp.grad(k.id).data() : nullptr;
    T* dv = gv ? tp.grad(v.id).data() : nullptr;
    for (std::size_t b = 0; b < lens.size(); ++b) {
      const std::size_t len = lens[b];
      const std::size_t base = b * seq_len * width;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = base + h * dh;
        const auto& p = (*probs)[b * heads + h];
        if (gv) kt.gemm_tn(len, dh, seq_len, p.data(), len, dout.data() + off, width, dv + off, width);
        if (!gq && !gk) continue;
        Matrix<T> ds(seq_len, len);
        kt.gemm_nt(seq_len, len, dh, dout.data() + off, width, v.value().data() + off,
                   width, ds.data(), len);
        for (std::size_t i = 0; i < seq_len; ++i) {
          T* dr = ds.data() + i * len;
          const T* pr = p.data() + i * len;
          const T inner = kt.dot(dr, pr, len);
          for (std::size_t j = 0; j < len; ++j) dr[j] = pr[j] * (dr[j] - inner) * scale;
        }
        if (gq) kt.gemm_nn(seq_len, dh, len, ds.data(), len, k.value().data() + off, width, dq + off, width);
        if (gk) kt.gemm_tn(len, dh, seq_len, ds.data(), len, q.value().data() + off, width, dk + off, width);
      }
    }
  });
}

template <class T>
Var<T> embed_sequences(Var<T> token_table, const Var<T>* prompt, Var<T> positions,
                       const std::vector<std::vector<int>>& tokens, std::size_t seq_len) {
  const auto& table = token_table.value();
  const std::size_t width = table.cols();
  const std::size_t m = prompt ? prompt->rows() : 0;
  if (prompt && prompt->cols() != width)
    throw std::invalid_argument("embed_sequences: prompt width mismatch");
  if (positions.value().cols() != width || positions.value().rows() < seq_len)
    throw std::invalid_argument("embed_sequences: positional table too small");
  // Flattened token id per packed row, -1 for prompt rows.
  std::vector<int> ids(tokens.size() * seq_len, -1);
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    if (m + tokens[b].size() > seq_len)
      throw std::invalid_argument("embed_sequences: sequence longer than packed length");
    for (std::size_t p = m; p < seq_len; ++p) {
      const std::size_t idx = p - m;
      const int tok = idx < tokens[b].size() ? tokens[b][idx] : 0;
      if (tok < 0 || static_cast<std::size_t>(tok) >= table.rows())
        throw std::out_of_range("embed_sequences: token id out of vocabulary");
      ids[b * seq_len + p] = tok;
    }
  }
  Matrix<T> x(tokens.size() * seq_len, width);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::size_t p = r % seq_len;
    T* xr = x.data() + r * width;
    const T* src = ids[r] < 0 ? prompt->value().data() + p * width
                              : table.data() + static_cast<std::size_t>(ids[r]) * width;
    for (std::size_t c = 0; c < width; ++c) xr[c] = src[c] + positions.value()(p, c);
  }
  std::vector<Var<T>> ins{token_table, positions};
  if (prompt) ins.push_back(*prompt);
  const Var<T> prompt_var = prompt ? *prompt : Var<T>{};
  const bool has_prompt = prompt != nullptr;
  return token_table.tape->record(std::move(x), ins,
                                  [token_table, positions, prompt_var, has_prompt, seq_len,
                                   ids = std::move(ids)](Tape<T>& tp, std::size_t self) {
    const auto& dx = tp.grad(self);
    const std::size_t width = dx.cols();
    const bool gt = tp.requires_grad(token_table.id), gp = tp.requires_grad(positions.id);
    const bool gpr = has_prompt && tp.requires_grad(prompt_var.id);
    T* dt = gt ? tp.grad(token_table.id).data() : nullptr;
    T* dpos = gp ? tp.grad(positions.id).data() : nullptr;
    T* dpr = gpr ? tp.grad(prompt_var.id).data() : nullptr;
    for (std::size_t r = 0; r < dx.rows(); ++r) {
      const std::size_t p = r % seq_len;
      const T* g = dx.data() + r * width;
      if (dpos) kernels::axpy(T(1), g, dpos + p * width, width);
      if (ids[r] < 0) {
        if (dpr) kernels::axpy(T(1), g, dpr + p * width, width);
      } else if (dt) {
        kernels::axpy(T(1), g, dt + static_cast<std::size_t>(ids[r]) * width, width);
      }
    }
  });
}

template <class T>
Var<T> scalar_with_gradients(std::span<const Var<T>> inputs, T value, std::vector<Matrix<T>> grads) {
  if (inputs.empty()) throw std::invalid_argument("scalar_with_gradients: no inputs");
  if (grads.size() != inputs.size())
    throw std::invalid_argument("scalar_with_gradients: one gradient per input required");
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!grads[i].same_shape(inputs[i].value()))
      throw std::invalid_argument("scalar_with_gradients: gradient shape mismatch");
  std::vector<Var<T>> ins(inputs.begin(), inputs.end());
  auto* tape = inputs.front().tape;
  return tape->record(Matrix<T>(1, 1, value), ins,
                      [ins, grads = std::move(grads)](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)(0, 0);
    for (std::size_t i = 0; i < ins.size(); ++i) add_into(tp, ins[i], grads[i], g);
  });
}

#define TSA_INSTANTIATE(T)                                                              \
  template class Tape<T>;                                                               \
  template Var<T> matmul(Var<T>, Var<T>);                                               \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> add_row_bias(Var<T>, Var<T>);                                         \
  template Var<T> relu(Var<T>);                                                         \
  template Var<T> gelu(Var<T>);                                                         \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                \
  template Var<T> gather_rows(Var<T>, std::vector<std::size_t>);                        \
  template Var<T> l2_normalize_rows(Var<T>);                                            \
  template Var<T> spmm(const Csr<T>&, Var<T>);                                          \
  template Var<T> stop_gradient(Var<T>);                                                \
  template Var<T> segment_mean(Var<T>, std::vector<std::size_t>, std::vector<std::size_t>); \
  template Var<T> masked_self_attention(Var<T>, Var<T>, Var<T>, std::size_t,            \
                                        std::vector<std::size_t>, std::size_t);         \
  template Var<T> embed_sequences(Var<T>, const Var<T>*, Var<T>,                        \
                                  const std::vector<std::vector<int>>&, std::size_t);   \
  template Var<T> scalar_with_gradients(std::span<const Var<T>>, T, std::vector<Matrix<T>>);

TSA_INSTANTIATE(float)
TSA_INSTANTIATE(double)

#undef TSA_INSTANTIATE

}  // namespace tsa::ag
