#pragma once

// LSTM layers and multi-head attention. Sequences of a batch are stored
// time-major in one tensor: row t * batch + b holds step t of sequence b.
// Shorter sequences are right-padded; causal layers never let padding reach
// a valid step.

#include <string>
#include <vector>

#include "obsr/nn/layers.hpp"

namespace obsr::nn {

struct LstmState {
    Tensor2 h;
    Tensor2 c;
};

/// Gate columns are ordered input, forget, candidate, output.
class LstmLayer {
public:
    LstmLayer() = default;
    LstmLayer(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, CounterRng& rng);

    std::size_t in() const { return wx_->value.rows(); }
    std::size_t hidden() const { return wh_->value.rows(); }

    LstmState zero_state(std::size_t batch) const;
    LstmState step(const Tensor2& x, const LstmState& prev) const;

    struct Cache {
        std::size_t steps = 0;
        std::size_t batch = 0;
        Tensor2 x;                   ///< (T*B) x in
        Tensor2 h_prev;              ///< (T*B) x H, state entering each step
        std::vector<Tensor2> gates;  ///< per step, activated, B x 4H
        std::vector<Tensor2> c;      ///< T+1 cell states, c[0] = 0
        std::vector<Tensor2> tanh_c; ///< per step
    };

    /// Returns hidden states, (T*B) x H.
    Tensor2 forward(const Tensor2& xs, std::size_t steps, Cache& cache) const;
    /// Accumulates parameter grads, returns d xs.
    Tensor2 backward(const Cache& cache, const Tensor2& dh) const;

private:
    Param* wx_ = nullptr;
    Param* wh_ = nullptr;
    Param* b_ = nullptr;
};

/// Layers fed one into the next.
class LstmStack {
public:
    LstmStack() = default;
    LstmStack(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t layers,
              CounterRng& rng);

    std::size_t hidden() const { return layers_.back().hidden(); }
    std::size_t depth() const { return layers_.size(); }

    std::vector<LstmState> zero_state(std::size_t batch) const;
    /// Advance every layer one step; returns the top layer's h.
    Tensor2 step(const Tensor2& x, std::vector<LstmState>& states) const;

    using Cache = std::vector<LstmLayer::Cache>;
    Tensor2 forward(const Tensor2& xs, std::size_t steps, Cache& cache) const;
    Tensor2 backward(const Cache& cache, const Tensor2& dh) const;

private:
    std::vector<LstmLayer> layers_;
};

/// Scaled dot-product attention per head, heads concatenated and projected.
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads, bool causal,
                       CounterRng& rng);

    std::size_t dim() const { return dim_; }
    std::size_t heads() const { return heads_; }
    bool causal() const { return causal_; }

    struct Cache {
        std::size_t steps = 0;
        std::size_t batch = 0;
        Tensor2 q_in, k_in, v_in;
        Tensor2 q, k, v;             ///< projected, (T*B) x D
        std::vector<Tensor2> probs;  ///< per (b, head), T x T
        Tensor2 concat;              ///< (T*B) x D
    };
    struct Grads {
        Tensor2 dq, dk, dv;
    };

    Tensor2 forward(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::size_t steps, Cache& cache,
                    Exec exec = Exec::parallel) const;
    Grads backward(const Cache& cache, const Tensor2& dy, Exec exec = Exec::parallel) const;

    /// Keys and values seen so far for one sequence, for step-by-step decoding.
    struct Incremental {
        std::vector<double> k;
        std::vector<double> v;
        std::size_t len = 0;
    };
    /// Self-attention output for a new 1 x D row given everything before it;
    /// equals the last row of a causal forward over the full prefix.
    Tensor2 step(const Tensor2& x, Incremental& state) const;

private:
    std::size_t dim_ = 0;
    std::size_t heads_ = 0;
    bool causal_ = true;
    Param *wq_ = nullptr, *wk_ = nullptr, *wv_ = nullptr, *wo_ = nullptr;
    Param *bq_ = nullptr, *bk_ = nullptr, *bv_ = nullptr, *bo_ = nullptr;
};

}  // namespace obsr::nn
