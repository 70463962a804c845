#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mealsynth/core/tensor.hpp"

namespace mealsynth::ag {

// Reverse-mode tape on shared_ptr graph nodes. Graphs are rebuilt every
// step; leaves (parameters) persist across steps and accumulate grads until
// the optimizer clears them.
struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<Value> parents;
  std::function<void(Node&)> backward_fn;

  Node() = default;
  explicit Node(Tensor v, bool rg = false) : value(std::move(v)), requires_grad(rg) {}

  Tensor& ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
    return grad;
  }
  void zero_grad() {
    if (!grad.data.empty()) std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
  double scalar() const { return value.data[0]; }
};

Value leaf(Tensor v, bool requires_grad = true);
Value constant(Tensor v);
Value detach(const Value& a);

// While a guard is alive, ops do not record parents; forward only.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Seeds root.grad with 1 (root must be scalar) and runs the tape.
void backward(const Value& root);

// elementwise / scalar
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value neg(const Value& a);
Value add_scalar(const Value& a, double s);
Value mul_scalar(const Value& a, double s);
Value tanh_(const Value& a);
Value sigmoid(const Value& a);
Value exp_(const Value& a);
Value log_(const Value& a);
Value relu(const Value& a);
Value leaky_relu(const Value& a, double slope);
Value square(const Value& a);
Value clamp(const Value& a, double lo, double hi);

// reductions (scalar results, shape {1})
Value sum(const Value& a);
Value mean(const Value& a);
Value dot(const Value& a, const Value& b);
Value cosine(const Value& a, const Value& b);  // throws DegenerateEmbedding on zero norm
Value add_n(const std::vector<Value>& xs);

// shape / linear algebra
Value reshape(const Value& a, std::vector<int64_t> shape);
Value matmul(const Value& a, const Value& b);        // [M,K]x[K,N]
Value add_bias(const Value& x, const Value& b);      // [R,C] + [C]
Value slice_cols(const Value& a, int64_t start, int64_t len);
Value concat_cols(const Value& a, const Value& b);
Value stack_rows(const std::vector<Value>& rows);    // k x [C] -> [k,C]
Value softmax_vec(const Value& a);                   // 1-D
Value gather_rows(const Value& table, const std::vector<int64_t>& ids);

// conv stack, NCHW
Value conv2d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad);
Value upsample_nearest2(const Value& x);
Value global_avg_pool(const Value& x);               // [B,C,H,W] -> [B,C]
Value instance_norm(const Value& x, const Value& gamma, const Value& beta, double eps = 1e-5);
Value spatial_tile(const Value& v, int64_t h, int64_t w);  // [B,D] -> [B,D,h,w]
Value concat_channels(const Value& a, const Value& b);

}  // namespace mealsynth::ag
