#include "mealsynth/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "mealsynth/core/kernels.hpp"

namespace mealsynth::ag {

namespace {

thread_local int no_grad_depth = 0;

bool any_requires_grad(const std::vector<Value>& vs) {
  for (const auto& v : vs)
    if (v->requires_grad) return true;
  return false;
}

// Builds an internal node; drops the tape when grads are disabled or no
// parent needs them.
Value make_op(Tensor value, std::vector<Value> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>(std::move(value));
  if (grad_enabled() && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw ShapeError(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                     " vs " + b->value.shape_str());
}

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Value leaf(Tensor v, bool requires_grad) {
  return std::make_shared<Node>(std::move(v), requires_grad);
}

Value constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

Value detach(const Value& a) { return constant(a->value); }

void backward(const Value& root) {
  if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
  if (!root->requires_grad) return;
  // iterative post-order topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

// bwd(grad_out, x, y, grad_x): y is the op output, read back from the node.
Value unary_map(const Value& a, double (*f)(double),
                std::function<void(const Tensor&, const Tensor&, const Tensor&, Tensor&)> bwd) {
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = f(a->value.data[i]);
  return make_op(std::move(out), {a}, [a, bwd](Node& self) {
    if (!a->requires_grad) return;
    bwd(self.grad, a->value, self.value, a->ensure_grad());
  });
}

}  // namespace

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] + b->value.data[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad)
      kernels::axpy(self.grad.data.data(), a->ensure_grad().data.data(), 1.0, self.grad.numel());
    if (b->requires_grad)
      kernels::axpy(self.grad.data.data(), b->ensure_grad().data.data(), 1.0, self.grad.numel());
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] - b->value.data[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad)
      kernels::axpy(self.grad.data.data(), a->ensure_grad().data.data(), 1.0, self.grad.numel());
    if (b->requires_grad)
      kernels::axpy(self.grad.data.data(), b->ensure_grad().data.data(), -1.0, self.grad.numel());
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] * b->value.data[i];
  return make_op(std::move(out), {a, b}, [a, b](Node& self) {
    const int64_t n = self.grad.numel();
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) ga.data[i] += self.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) gb.data[i] += self.grad.data[i] * a->value.data[i];
    }
  });
}

Value neg(const Value& a) { return mul_scalar(a, -1.0); }

Value add_scalar(const Value& a, double s) {
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] + s;
  return make_op(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad)
      kernels::axpy(self.grad.data.data(), a->ensure_grad().data.data(), 1.0, self.grad.numel());
  });
}

Value mul_scalar(const Value& a, double s) {
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = a->value.data[i] * s;
  return make_op(std::move(out), {a}, [a, s](Node& self) {
    if (a->requires_grad)
      kernels::axpy(self.grad.data.data(), a->ensure_grad().data.data(), s, self.grad.numel());
  });
}

Value tanh_(const Value& a) {
  return unary_map(a, [](double x) { return std::tanh(x); },
                   [](const Tensor& g, const Tensor&, const Tensor& y, Tensor& ga) {
                     const int64_t n = g.numel();
#pragma omp parallel for schedule(static)
                     for (int64_t i = 0; i < n; ++i)
                       ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                   });
}

Value sigmoid(const Value& a) {
  return unary_map(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                   [](const Tensor& g, const Tensor&, const Tensor& y, Tensor& ga) {
                     const int64_t n = g.numel();
#pragma omp parallel for schedule(static)
                     for (int64_t i = 0; i < n; ++i)
                       ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
                   });
}

Value exp_(const Value& a) {
  return unary_map(a, [](double x) { return std::exp(x); },
                   [](const Tensor& g, const Tensor&, const Tensor& y, Tensor& ga) {
                     const int64_t n = g.numel();
#pragma omp parallel for schedule(static)
                     for (int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i] * y.data[i];
                   });
}

Value log_(const Value& a) {
  return unary_map(a, [](double x) { return std::log(x); },
                   [](const Tensor& g, const Tensor& x, const Tensor&, Tensor& ga) {
                     const int64_t n = g.numel();
#pragma omp parallel for schedule(static)
                     for (int64_t i = 0; i < n; ++i) ga.data[i] += g.data[i] / x.data[i];
                   });
}

Value relu(const Value& a) {
  return unary_map(a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](const Tensor& g, const Tensor& x, const Tensor&, Tensor& ga) {
                     const int64_t n = g.numel();
#pragma omp parallel for schedule(static)
                     for (int64_t i = 0; i < n; ++i)
                       ga.data[i] += x.data[i] > 0.0 ? g.data[i] : 0.0;
                   });
}

Value leaky_relu(const Value& a, double slope) {
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double x = a->value.data[i];
    out.data[i] = x > 0.0 ? x : slope * x;
  }
  return make_op(std::move(out), {a}, [a, slope](Node& self) {
    if (!a->requires_grad) return;
    auto& ga = a->ensure_grad();
    const int64_t n = self.grad.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i)
      ga.data[i] += self.grad.data[i] * (a->value.data[i] > 0.0 ? 1.0 : slope);
  });
}

Value square(const Value& a) { return mul(a, a); }

Value clamp(const Value& a, double lo, double hi) {
  Tensor out(a->value.shape);
  const int64_t n = out.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) out.data[i] = std::clamp(a->value.data[i], lo, hi);
  return make_op(std::move(out), {a}, [a, lo, hi](Node& self) {
    if (!a->requires_grad) return;
    auto& ga = a->ensure_grad();
    const int64_t n = self.grad.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      const double x = a->value.data[i];
      if (x > lo && x < hi) ga.data[i] += self.grad.data[i];
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Value sum(const Value& a) {
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  return make_op(Tensor::scalar(acc), {a}, [a](Node& self) {
    if (!a->requires_grad) return;
    auto& ga = a->ensure_grad();
    const double g = self.grad.data[0];
    const int64_t n = ga.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) ga.data[i] += g;
  });
}

Value mean(const Value& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a->value.numel())); }

Value dot(const Value& a, const Value& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  const int64_t n = a->value.numel();
  for (int64_t i = 0; i < n; ++i) acc += a->value.data[i] * b->value.data[i];
  return make_op(Tensor::scalar(acc), {a, b}, [a, b](Node& self) {
    const double g = self.grad.data[0];
    if (a->requires_grad)
      kernels::axpy(b->value.data.data(), a->ensure_grad().data.data(), g, a->value.numel());
    if (b->requires_grad)
      kernels::axpy(a->value.data.data(), b->ensure_grad().data.data(), g, b->value.numel());
  });
}

Value cosine(const Value& a, const Value& b) {
  check_same_shape(a, b, "cosine");
  const int64_t n = a->value.numel();
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    aa += a->value.data[i] * a->value.data[i];
    bb += b->value.data[i] * b->value.data[i];
    ab += a->value.data[i] * b->value.data[i];
  }
  if (aa == 0.0 || bb == 0.0)
    throw DegenerateEmbedding("cosine of zero-norm vector");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double cosv = ab / (na * nb);
  return make_op(Tensor::scalar(cosv), {a, b}, [a, b, na, nb, cosv](Node& self) {
    const double g = self.grad.data[0];
    const int64_t n = a->value.numel();
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i)
        ga.data[i] += g * (b->value.data[i] / (na * nb) - cosv * a->value.data[i] / (na * na));
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i)
        gb.data[i] += g * (a->value.data[i] / (na * nb) - cosv * b->value.data[i] / (nb * nb));
    }
  });
}

Value add_n(const std::vector<Value>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty list");
  Tensor out = xs[0]->value;
  for (size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(xs[0], xs[i], "add_n");
    const int64_t n = out.numel();
    const auto& d = xs[i]->value.data;
    for (int64_t j = 0; j < n; ++j) out.data[j] += d[j];
  }
  std::vector<Value> parents(xs.begin(), xs.end());
  return make_op(std::move(out), std::move(parents), [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad)
        kernels::axpy(self.grad.data.data(), p->ensure_grad().data.data(), 1.0,
                      self.grad.numel());
    }
  });
}

// ---------------------------------------------------------------------------
// shape / linear algebra

Value reshape(const Value& a, std::vector<int64_t> shape) {
  Tensor out = a->value.reshaped(shape);
  return make_op(std::move(out), {a}, [a](Node& self) {
    if (a->requires_grad)
      kernels::axpy(self.grad.data.data(), a->ensure_grad().data.data(), 1.0, self.grad.numel());
  });
}

Value matmul(const Value& a, const Value& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ShapeError("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                     b->value.shape_str());
  const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  Tensor out({m, n});
  kernels::matmul(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
  return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    if (a->requires_grad) {
      // dA += dC * B^T
      Tensor da({m, k});
      kernels::matmul_nt(self.grad.data.data(), b->value.data.data(), da.data.data(), m, n, k);
      kernels::axpy(da.data.data(), a->ensure_grad().data.data(), 1.0, m * k);
    }
    if (b->requires_grad) {
      // dB += A^T * dC
      Tensor db({k, n});
      kernels::matmul_tn(a->value.data.data(), self.grad.data.data(), db.data.data(), k, m, n);
      kernels::axpy(db.data.data(), b->ensure_grad().data.data(), 1.0, k * n);
    }
  });
}

Value add_bias(const Value& x, const Value& b) {
  if (x->value.ndim() != 2 || b->value.ndim() != 1 || x->value.dim(1) != b->value.dim(0))
    throw ShapeError("add_bias: incompatible shapes");
  const int64_t r = x->value.dim(0), c = x->value.dim(1);
  Tensor out = x->value;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data[i * c + j] += b->value.data[j];
  return make_op(std::move(out), {x, b}, [x, b, r, c](Node& self) {
    if (x->requires_grad)
      kernels::axpy(self.grad.data.data(), x->ensure_grad().data.data(), 1.0, r * c);
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < r; ++i) acc += self.grad.data[i * c + j];
        gb.data[j] += acc;
      }
    }
  });
}

Value slice_cols(const Value& a, int64_t start, int64_t len) {
  if (a->value.ndim() != 2 || start < 0 || start + len > a->value.dim(1))
    throw ShapeError("slice_cols: out of range");
  const int64_t r = a->value.dim(0), c = a->value.dim(1);
  Tensor out({r, len});
  for (int64_t i = 0; i < r; ++i)
    std::memcpy(&out.data[i * len], &a->value.data[i * c + start],
                sizeof(double) * static_cast<size_t>(len));
  return make_op(std::move(out), {a}, [a, start, len, r, c](Node& self) {
    if (!a->requires_grad) return;
    auto& ga = a->ensure_grad();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < len; ++j)
        ga.data[i * c + start + j] += self.grad.data[i * len + j];
  });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(0) != b->value.dim(0))
    throw ShapeError("concat_cols: incompatible shapes");
  const int64_t r = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
  Tensor out({r, ca + cb});
  for (int64_t i = 0; i < r; ++i) {
    std::memcpy(&out.data[i * (ca + cb)], &a->value.data[i * ca],
                sizeof(double) * static_cast<size_t>(ca));
    std::memcpy(&out.data[i * (ca + cb) + ca], &b->value.data[i * cb],
                sizeof(double) * static_cast<size_t>(cb));
  }
  return make_op(std::move(out), {a, b}, [a, b, r, ca, cb](Node& self) {
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < ca; ++j)
          ga.data[i * ca + j] += self.grad.data[i * (ca + cb) + j];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < cb; ++j)
          gb.data[i * cb + j] += self.grad.data[i * (ca + cb) + ca + j];
    }
  });
}

Value stack_rows(const std::vector<Value>& rows) {
  if (rows.empty()) throw EmptySequence("stack_rows: empty list");
  const int64_t c = rows[0]->value.numel();
  const int64_t k = static_cast<int64_t>(rows.size());
  Tensor out({k, c});
  for (int64_t i = 0; i < k; ++i) {
    if (rows[static_cast<size_t>(i)]->value.numel() != c)
      throw ShapeError("stack_rows: ragged rows");
    std::memcpy(&out.data[i * c], rows[static_cast<size_t>(i)]->value.data.data(),
                sizeof(double) * static_cast<size_t>(c));
  }
  std::vector<Value> parents(rows.begin(), rows.end());
  return make_op(std::move(out), std::move(parents), [c](Node& self) {
    for (size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (!p->requires_grad) continue;
      auto& gp = p->ensure_grad();
      const double* src = &self.grad.data[static_cast<int64_t>(i) * c];
      for (int64_t j = 0; j < c; ++j) gp.data[j] += src[j];
    }
  });
}

Value softmax_vec(const Value& a) {
  if (a->value.ndim() != 1) throw ShapeError("softmax_vec: expects 1-D input");
  const int64_t n = a->value.numel();
  Tensor out({n});
  double mx = a->value.data[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, a->value.data[i]);
  double z = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    out.data[i] = std::exp(a->value.data[i] - mx);
    z += out.data[i];
  }
  for (int64_t i = 0; i < n; ++i) out.data[i] /= z;
  Tensor y = out;
  return make_op(std::move(out), {a}, [a, y](Node& self) {
    if (!a->requires_grad) return;
    auto& ga = a->ensure_grad();
    const int64_t n = y.numel();
    double gy = 0.0;
    for (int64_t i = 0; i < n; ++i) gy += self.grad.data[i] * y.data[i];
    for (int64_t i = 0; i < n; ++i)
      ga.data[i] += y.data[i] * (self.grad.data[i] - gy);
  });
}

Value gather_rows(const Value& table, const std::vector<int64_t>& ids) {
  if (table->value.ndim() != 2) throw ShapeError("gather_rows: table must be 2-D");
  const int64_t v = table->value.dim(0), e = table->value.dim(1);
  for (int64_t id : ids)
    if (id < 0 || id >= v) throw InvalidId("embedding id " + std::to_string(id) + " out of range");
  const int64_t k = static_cast<int64_t>(ids.size());
  Tensor out({k, e});
  for (int64_t i = 0; i < k; ++i)
    std::memcpy(&out.data[i * e], &table->value.data[ids[static_cast<size_t>(i)] * e],
                sizeof(double) * static_cast<size_t>(e));
  return make_op(std::move(out), {table}, [table, ids, e](Node& self) {
    if (!table->requires_grad) return;
    auto& gt = table->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i) {
      double* dst = &gt.data[ids[i] * e];
      const double* src = &self.grad.data[static_cast<int64_t>(i) * e];
      for (int64_t j = 0; j < e; ++j) dst[j] += src[j];
    }
  });
}

// ---------------------------------------------------------------------------
// conv stack

namespace {

void check_nchw(const Value& x, const char* op) {
  if (x->value.ndim() != 4) throw ShapeError(std::string(op) + ": expects NCHW input");
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad) {
  check_nchw(x, "conv2d");
  if (w->value.ndim() != 4 || w->value.dim(1) != x->value.dim(1))
    throw ShapeError("conv2d: weight/input channel mismatch");
  const int64_t bs = x->value.dim(0), ci = x->value.dim(1);
  const int64_t h = x->value.dim(2), wd = x->value.dim(3);
  const int64_t co = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (b->value.numel() != co) throw ShapeError("conv2d: bias size mismatch");
  const int64_t oh = kernels::conv_out_size(h, kh, stride, pad);
  const int64_t ow = kernels::conv_out_size(wd, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: output size not positive");
  const int64_t ckk = ci * kh * kw;
  const int64_t rows = oh * ow;

  Tensor out({bs, co, oh, ow});
  {
    std::vector<double> col(static_cast<size_t>(rows * ckk));
    std::vector<double> orow(static_cast<size_t>(rows * co));
    for (int64_t n = 0; n < bs; ++n) {
      kernels::im2col(&x->value.data[n * ci * h * wd], ci, h, wd, kh, kw, stride, pad,
                      col.data());
      // [rows, ckk] x [co, ckk]^T -> [rows, co]
      kernels::matmul_nt(col.data(), w->value.data.data(), orow.data(), rows, ckk, co);
      double* dst = &out.data[n * co * rows];
#pragma omp parallel for schedule(static)
      for (int64_t c = 0; c < co; ++c) {
        const double bias = b->value.data[c];
        for (int64_t r = 0; r < rows; ++r) dst[c * rows + r] = orow[r * co + c] + bias;
      }
    }
  }

  return make_op(std::move(out), {x, w, b},
                 [x, w, b, bs, ci, h, wd, co, kh, kw, stride, pad, oh, ow, ckk,
                  rows](Node& self) {
    // grad rows in [rows, co] layout per sample
    std::vector<double> grow(static_cast<size_t>(rows * co));
    std::vector<double> col(static_cast<size_t>(rows * ckk));
    std::vector<double> dcol(static_cast<size_t>(rows * ckk));
    Tensor dw({co, ci, kh, kw});
    Tensor dwn({co, ci, kh, kw});
    const bool need_x = x->requires_grad;
    const bool need_w = w->requires_grad;
    const bool need_b = b->requires_grad;
    for (int64_t n = 0; n < bs; ++n) {
      const double* g = &self.grad.data[n * co * rows];
#pragma omp parallel for schedule(static)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < co; ++c) grow[r * co + c] = g[c * rows + r];
      if (need_w || need_x)
        kernels::im2col(&x->value.data[n * ci * h * wd], ci, h, wd, kh, kw, stride, pad,
                        col.data());
      if (need_w) {
        // dW_n = grow^T [co, rows] * col [rows, ckk]
        kernels::matmul_tn(grow.data(), col.data(), dwn.data.data(), co, rows, ckk);
        kernels::axpy(dwn.data.data(), dw.data.data(), 1.0, co * ckk);
      }
      if (need_x) {
        // dcol = grow [rows, co] * W [co, ckk]
        kernels::matmul(grow.data(), w->value.data.data(), dcol.data(), rows, co, ckk);
        Tensor dximg({ci, h, wd});
        kernels::col2im(dcol.data(), ci, h, wd, kh, kw, stride, pad, dximg.data.data());
        kernels::axpy(dximg.data.data(), &x->ensure_grad().data[n * ci * h * wd], 1.0,
                      ci * h * wd);
      }
    }
    if (need_w) kernels::axpy(dw.data.data(), w->ensure_grad().data.data(), 1.0, co * ckk);
    if (need_b) {
      auto& gb = b->ensure_grad();
      for (int64_t n = 0; n < bs; ++n) {
        const double* g = &self.grad.data[n * co * rows];
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < co; ++c) {
          double acc = 0.0;
          for (int64_t r = 0; r < rows; ++r) acc += g[c * rows + r];
          gb.data[c] += acc;
        }
      }
    }
  });
}

Value upsample_nearest2(const Value& x) {
  check_nchw(x, "upsample_nearest2");
  const int64_t bs = x->value.dim(0), c = x->value.dim(1);
  const int64_t h = x->value.dim(2), w = x->value.dim(3);
  Tensor out({bs, c, 2 * h, 2 * w});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bs * c; ++p) {
    const double* src = &x->value.data[p * h * w];
    double* dst = &out.data[p * 4 * h * w];
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx)
        dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return make_op(std::move(out), {x}, [x, bs, c, h, w](Node& self) {
    if (!x->requires_grad) return;
    auto& gx = x->ensure_grad();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < bs * c; ++p) {
      const double* g = &self.grad.data[p * 4 * h * w];
      double* dst = &gx.data[p * h * w];
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx)
          dst[y * w + xx] += g[(2 * y) * 2 * w + 2 * xx] + g[(2 * y) * 2 * w + 2 * xx + 1] +
                             g[(2 * y + 1) * 2 * w + 2 * xx] +
                             g[(2 * y + 1) * 2 * w + 2 * xx + 1];
    }
  });
}

Value global_avg_pool(const Value& x) {
  check_nchw(x, "global_avg_pool");
  const int64_t bs = x->value.dim(0), c = x->value.dim(1);
  const int64_t hw = x->value.dim(2) * x->value.dim(3);
  Tensor out({bs, c});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bs * c; ++p) {
    const double* src = &x->value.data[p * hw];
    double acc = 0.0;
    for (int64_t i = 0; i < hw; ++i) acc += src[i];
    out.data[p] = acc / static_cast<double>(hw);
  }
  return make_op(std::move(out), {x}, [x, bs, c, hw](Node& self) {
    if (!x->requires_grad) return;
    auto& gx = x->ensure_grad();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < bs * c; ++p) {
      const double g = self.grad.data[p] / static_cast<double>(hw);
      double* dst = &gx.data[p * hw];
      for (int64_t i = 0; i < hw; ++i) dst[i] += g;
    }
  });
}

Value instance_norm(const Value& x, const Value& gamma, const Value& beta, double eps) {
  check_nchw(x, "instance_norm");
  const int64_t bs = x->value.dim(0), c = x->value.dim(1);
  const int64_t hw = x->value.dim(2) * x->value.dim(3);
  if (gamma->value.numel() != c || beta->value.numel() != c)
    throw ShapeError("instance_norm: affine size mismatch");
  Tensor out(x->value.shape);
  Tensor xhat(x->value.shape);
  Tensor inv_std({bs, c});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bs * c; ++p) {
    const double* src = &x->value.data[p * hw];
    double mu = 0.0;
    for (int64_t i = 0; i < hw; ++i) mu += src[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      const double d = src[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std.data[p] = is;
    const double g = gamma->value.data[p % c], b = beta->value.data[p % c];
    double* xh = &xhat.data[p * hw];
    double* o = &out.data[p * hw];
    for (int64_t i = 0; i < hw; ++i) {
      xh[i] = (src[i] - mu) * is;
      o[i] = g * xh[i] + b;
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat, inv_std, bs, c, hw](Node& self) {
    if (x->requires_grad) {
      auto& gx = x->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t p = 0; p < bs * c; ++p) {
        const double* gy = &self.grad.data[p * hw];
        const double* xh = &xhat.data[p * hw];
        const double gscale = gamma->value.data[p % c];
        double mean_g = 0.0, mean_gx = 0.0;
        for (int64_t i = 0; i < hw; ++i) {
          mean_g += gy[i];
          mean_gx += gy[i] * xh[i];
        }
        mean_g /= static_cast<double>(hw);
        mean_gx /= static_cast<double>(hw);
        const double is = inv_std.data[p];
        double* dst = &gx.data[p * hw];
        for (int64_t i = 0; i < hw; ++i)
          dst[i] += gscale * is * (gy[i] - mean_g - xh[i] * mean_gx);
      }
    }
    if (gamma->requires_grad) {
      auto& gg = gamma->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t n = 0; n < bs; ++n) {
          const int64_t p = n * c + ch;
          const double* gy = &self.grad.data[p * hw];
          const double* xh = &xhat.data[p * hw];
          for (int64_t i = 0; i < hw; ++i) acc += gy[i] * xh[i];
        }
        gg.data[ch] += acc;
      }
    }
    if (beta->requires_grad) {
      auto& gb = beta->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t n = 0; n < bs; ++n) {
          const double* gy = &self.grad.data[(n * c + ch) * hw];
          for (int64_t i = 0; i < hw; ++i) acc += gy[i];
        }
        gb.data[ch] += acc;
      }
    }
  });
}

Value spatial_tile(const Value& v, int64_t h, int64_t w) {
  if (v->value.ndim() != 2) throw ShapeError("spatial_tile: expects [B,D] input");
  const int64_t bs = v->value.dim(0), d = v->value.dim(1);
  Tensor out({bs, d, h, w});
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < bs * d; ++p) {
    const double val = v->value.data[p];
    double* dst = &out.data[p * h * w];
    for (int64_t i = 0; i < h * w; ++i) dst[i] = val;
  }
  return make_op(std::move(out), {v}, [v, bs, d, h, w](Node& self) {
    if (!v->requires_grad) return;
    auto& gv = v->ensure_grad();
#pragma omp parallel for schedule(static)
    for (int64_t p = 0; p < bs * d; ++p) {
      const double* g = &self.grad.data[p * h * w];
      double acc = 0.0;
      for (int64_t i = 0; i < h * w; ++i) acc += g[i];
      gv.data[p] += acc;
    }
  });
}

Value concat_channels(const Value& a, const Value& b) {
  check_nchw(a, "concat_channels");
  check_nchw(b, "concat_channels");
  const int64_t bs = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
  const int64_t h = a->value.dim(2), w = a->value.dim(3);
  if (b->value.dim(0) != bs || b->value.dim(2) != h || b->value.dim(3) != w)
    throw ShapeError("concat_channels: spatial/batch mismatch");
  const int64_t hw = h * w;
  Tensor out({bs, ca + cb, h, w});
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < bs; ++n) {
    std::memcpy(&out.data[n * (ca + cb) * hw], &a->value.data[n * ca * hw],
                sizeof(double) * static_cast<size_t>(ca * hw));
    std::memcpy(&out.data[(n * (ca + cb) + ca) * hw], &b->value.data[n * cb * hw],
                sizeof(double) * static_cast<size_t>(cb * hw));
  }
  return make_op(std::move(out), {a, b}, [a, b, bs, ca, cb, hw](Node& self) {
    if (a->requires_grad) {
      auto& ga = a->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t n = 0; n < bs; ++n)
        for (int64_t i = 0; i < ca * hw; ++i)
          ga.data[n * ca * hw + i] += self.grad.data[n * (ca + cb) * hw + i];
    }
    if (b->requires_grad) {
      auto& gb = b->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int64_t n = 0; n < bs; ++n)
        for (int64_t i = 0; i < cb * hw; ++i)
          gb.data[n * cb * hw + i] += self.grad.data[(n * (ca + cb) + ca) * hw + i];
    }
  });
}

}  // namespace mealsynth::ag
