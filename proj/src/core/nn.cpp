#include "mealsynth/core/nn.hpp"

#include <cmath>

namespace mealsynth::nn {

Linear::Linear(int64_t in, int64_t out, Rng& rng, double init_std) {
  if (init_std < 0.0) init_std = std::sqrt(2.0 / static_cast<double>(in + out));
  W = ag::leaf(Tensor::randn({in, out}, rng, init_std));
  b = ag::leaf(Tensor::zeros({out}));
}

Conv2d::Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride_, int64_t pad_, Rng& rng,
               double init_std)
    : stride(stride_), pad(pad_) {
  if (init_std < 0.0) init_std = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  W = ag::leaf(Tensor::randn({cout, cin, k, k}, rng, init_std));
  b = ag::leaf(Tensor::zeros({cout}));
}

InstanceNorm::InstanceNorm(int64_t c) {
  gamma = ag::leaf(Tensor::full({c}, 1.0));
  beta = ag::leaf(Tensor::zeros({c}));
}

Embedding::Embedding(int64_t vocab, int64_t dim, Rng& rng) {
  table = ag::leaf(Tensor::randn({vocab, dim}, rng, 1.0 / std::sqrt(static_cast<double>(dim))));
}

LstmCell::LstmCell(int64_t in, int64_t hidden_, Rng& rng) : hidden(hidden_) {
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  Wx = ag::leaf(Tensor::uniform({in, 4 * hidden}, rng, -s, s));
  Wh = ag::leaf(Tensor::uniform({hidden, 4 * hidden}, rng, -s, s));
  Tensor bias = Tensor::zeros({4 * hidden});
  // forget-gate bias starts at 1
  for (int64_t i = hidden; i < 2 * hidden; ++i) bias.data[i] = 1.0;
  b = ag::leaf(std::move(bias));
}

std::pair<Value, Value> LstmCell::step(const Value& x, const Value& h, const Value& c) const {
  Value gates = ag::add_bias(ag::add(ag::matmul(x, Wx), ag::matmul(h, Wh)), b);
  Value i = ag::sigmoid(ag::slice_cols(gates, 0, hidden));
  Value f = ag::sigmoid(ag::slice_cols(gates, hidden, hidden));
  Value g = ag::tanh_(ag::slice_cols(gates, 2 * hidden, hidden));
  Value o = ag::sigmoid(ag::slice_cols(gates, 3 * hidden, hidden));
  Value c_next = ag::add(ag::mul(f, c), ag::mul(i, g));
  Value h_next = ag::mul(o, ag::tanh_(c_next));
  return {h_next, c_next};
}

BiLstm::BiLstm(int64_t in, int64_t hidden_total_, Rng& rng) : hidden_total(hidden_total_) {
  if (hidden_total % 2 != 0) throw ShapeError("BiLstm: hidden_total must be even");
  fw = LstmCell(in, hidden_total / 2, rng);
  bw = LstmCell(in, hidden_total / 2, rng);
}

Value BiLstm::forward(const Value& x_seq) const {
  if (x_seq->value.ndim() != 2) throw ShapeError("BiLstm: expects [N, in]");
  const int64_t n = x_seq->value.dim(0);
  if (n < 1) throw EmptySequence("BiLstm: empty sequence");
  const int64_t hh = hidden_total / 2;
  std::vector<Value> rows(static_cast<size_t>(n));
  std::vector<Value> fw_h(static_cast<size_t>(n)), bw_h(static_cast<size_t>(n));

  Value h = ag::constant(Tensor::zeros({1, hh}));
  Value c = ag::constant(Tensor::zeros({1, hh}));
  for (int64_t t = 0; t < n; ++t) {
    Value xt = ag::slice_cols(ag::reshape(x_seq, {1, n * x_seq->value.dim(1)}),
                              t * x_seq->value.dim(1), x_seq->value.dim(1));
    std::tie(h, c) = fw.step(xt, h, c);
    fw_h[static_cast<size_t>(t)] = h;
  }
  h = ag::constant(Tensor::zeros({1, hh}));
  c = ag::constant(Tensor::zeros({1, hh}));
  for (int64_t t = n - 1; t >= 0; --t) {
    Value xt = ag::slice_cols(ag::reshape(x_seq, {1, n * x_seq->value.dim(1)}),
                              t * x_seq->value.dim(1), x_seq->value.dim(1));
    std::tie(h, c) = bw.step(xt, h, c);
    bw_h[static_cast<size_t>(t)] = h;
  }
  for (int64_t t = 0; t < n; ++t)
    rows[static_cast<size_t>(t)] = ag::reshape(
        ag::concat_cols(fw_h[static_cast<size_t>(t)], bw_h[static_cast<size_t>(t)]),
        {hidden_total});
  return ag::stack_rows(rows);
}

AttentionPool::AttentionPool(int64_t hidden, Rng& rng) {
  u = ag::leaf(Tensor::randn({hidden}, rng, 1.0 / std::sqrt(static_cast<double>(hidden))));
}

std::pair<Value, Value> AttentionPool::forward(const Value& hidden_states) const {
  if (hidden_states->value.ndim() != 2)
    throw ShapeError("AttentionPool: expects [N, H]");
  const int64_t n = hidden_states->value.dim(0), hdim = hidden_states->value.dim(1);
  if (n < 1) throw EmptySequence("AttentionPool: empty sequence");
  // scores_i = u . h_i
  Value scores = ag::reshape(ag::matmul(hidden_states, ag::reshape(u, {hdim, 1})), {n});
  Value alpha = ag::softmax_vec(scores);
  Value pooled = ag::matmul(ag::reshape(alpha, {1, n}), hidden_states);
  return {pooled, alpha};
}

Value softmax_rows(const Value& logits) {
  if (logits->value.ndim() != 2) throw ShapeError("softmax_rows: expects [N, K]");
  const int64_t n = logits->value.dim(0), k = logits->value.dim(1);
  std::vector<Value> rows(static_cast<size_t>(n));
  Value flat = ag::reshape(logits, {1, n * k});
  for (int64_t i = 0; i < n; ++i)
    rows[static_cast<size_t>(i)] =
        ag::softmax_vec(ag::reshape(ag::slice_cols(flat, i * k, k), {k}));
  return ag::stack_rows(rows);
}

Value cross_entropy_rows(const Value& probs, const std::vector<int64_t>& labels) {
  const int64_t n = probs->value.dim(0), k = probs->value.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("cross_entropy_rows: label count mismatch");
  Value flat = ag::reshape(probs, {1, n * k});
  std::vector<Value> terms;
  terms.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Value p = ag::slice_cols(flat, i * k + labels[static_cast<size_t>(i)], 1);
    terms.push_back(ag::neg(ag::log_(ag::clamp(p, 1e-12, 1.0))));
  }
  return ag::mul_scalar(ag::reshape(ag::add_n(terms), {1}), 1.0 / static_cast<double>(n));
}

}  // namespace mealsynth::nn
