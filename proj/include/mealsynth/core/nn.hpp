#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mealsynth/core/autograd.hpp"
#include "mealsynth/core/rng.hpp"

namespace mealsynth::nn {

using ag::Value;

// Named parameter leaves. Models register into one registry; the optimizer
// and checkpoint IO both walk it.
struct ParamRegistry {
  std::vector<std::pair<std::string, Value>> items;

  void add(const std::string& name, const Value& v) { items.emplace_back(name, v); }
  std::vector<Value> values() const {
    std::vector<Value> out;
    out.reserve(items.size());
    for (const auto& [n, v] : items) out.push_back(v);
    return out;
  }
  const Value* find(const std::string& name) const {
    for (const auto& [n, v] : items)
      if (n == name) return &v;
    return nullptr;
  }
};

struct Linear {
  Value W, b;  // W stored [in, out]

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng, double init_std = -1.0);
  Value forward(const Value& x) const { return ag::add_bias(ag::matmul(x, W), b); }
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".W", W);
    reg.add(prefix + ".b", b);
  }
};

struct Conv2d {
  Value W, b;  // W [cout, cin, k, k]
  int64_t stride = 1, pad = 1;

  Conv2d() = default;
  Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t stride, int64_t pad, Rng& rng,
         double init_std = -1.0);
  Value forward(const Value& x) const { return ag::conv2d(x, W, b, stride, pad); }
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".W", W);
    reg.add(prefix + ".b", b);
  }
};

struct InstanceNorm {
  Value gamma, beta;

  InstanceNorm() = default;
  explicit InstanceNorm(int64_t c);
  Value forward(const Value& x) const { return ag::instance_norm(x, gamma, beta); }
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".gamma", gamma);
    reg.add(prefix + ".beta", beta);
  }
};

struct Embedding {
  Value table;  // [vocab, dim]

  Embedding() = default;
  Embedding(int64_t vocab, int64_t dim, Rng& rng);
  Value forward(const std::vector<int64_t>& ids) const { return ag::gather_rows(table, ids); }
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".table", table);
  }
};

// Single-direction LSTM cell; gate layout along the 4H axis is [i, f, g, o].
struct LstmCell {
  Value Wx, Wh, b;  // [in,4H], [H,4H], [4H]
  int64_t hidden = 0;

  LstmCell() = default;
  LstmCell(int64_t in, int64_t hidden, Rng& rng);
  // x: [1,in]; returns (h', c') each [1,H]
  std::pair<Value, Value> step(const Value& x, const Value& h, const Value& c) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".Wx", Wx);
    reg.add(prefix + ".Wh", Wh);
    reg.add(prefix + ".b", b);
  }
};

// Bidirectional LSTM over one sequence; per-position output is the
// concatenation of the two directions' hidden states.
struct BiLstm {
  LstmCell fw, bw;
  int64_t hidden_total = 0;

  BiLstm() = default;
  BiLstm(int64_t in, int64_t hidden_total, Rng& rng);
  // x_seq: [N, in] -> [N, hidden_total]
  Value forward(const Value& x_seq) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    fw.register_params(reg, prefix + ".fw");
    bw.register_params(reg, prefix + ".bw");
  }
};

// Scored softmax pooling with a learned context vector u.
struct AttentionPool {
  Value u;  // [H]

  AttentionPool() = default;
  AttentionPool(int64_t hidden, Rng& rng);
  // hidden_states: [N, H] -> (pooled [1, H], weights [N])
  std::pair<Value, Value> forward(const Value& hidden_states) const;
  void register_params(ParamRegistry& reg, const std::string& prefix) const {
    reg.add(prefix + ".u", u);
  }
};

// Softmax over the rows of a [N, K] logits matrix (stable, per row).
Value softmax_rows(const Value& logits);

// Mean cross-entropy of per-row softmax probabilities against integer labels.
Value cross_entropy_rows(const Value& probs, const std::vector<int64_t>& labels);

}  // namespace mealsynth::nn
