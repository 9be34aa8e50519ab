#include "obsr/nn/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obsr/parallel.hpp"

namespace obsr::nn {

namespace {

void copy_rows(const Tensor2& src, std::size_t first, Tensor2& dst) {
    std::copy(src.row(first), src.row(first) + dst.size(), dst.data().begin());
}

void paste_rows(const Tensor2& src, Tensor2& dst, std::size_t first) {
    std::copy(src.data().begin(), src.data().end(), dst.row(first));
}

std::size_t check_steps(const Tensor2& xs, std::size_t steps, const char* what) {
    if (steps == 0 || xs.rows() % steps != 0) fail(Errc::ShapeMismatch, std::string(what) + ": rows not a multiple of steps");
    return xs.rows() / steps;
}

}  // namespace

LstmLayer::LstmLayer(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, CounterRng& rng) {
    wx_ = &store.add(name + ".wx", in, 4 * hidden);
    wh_ = &store.add(name + ".wh", hidden, 4 * hidden);
    b_ = &store.add(name + ".b", 1, 4 * hidden);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    uniform_fill(wx_->value, bound, rng);
    uniform_fill(wh_->value, bound, rng);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b_->value(0, j) = 1.0;
}

LstmState LstmLayer::zero_state(std::size_t batch) const {
    return {Tensor2(batch, hidden()), Tensor2(batch, hidden())};
}

namespace {

// gates: pre-activations in, activations out; then the new cell and hidden state
void lstm_cell(Tensor2& gates, const Tensor2& c_prev, Tensor2& c, Tensor2& tanh_c, Tensor2& h) {
    const std::size_t hd = c_prev.cols();
    for (std::size_t b = 0; b < gates.rows(); ++b) {
        double* g = gates.row(b);
        for (std::size_t j = 0; j < hd; ++j) {
            const double i = sigmoid(g[j]);
            const double f = sigmoid(g[hd + j]);
            const double cand = std::tanh(g[2 * hd + j]);
            const double o = sigmoid(g[3 * hd + j]);
            g[j] = i;
            g[hd + j] = f;
            g[2 * hd + j] = cand;
            g[3 * hd + j] = o;
            const double cn = f * c_prev(b, j) + i * cand;
            const double tc = std::tanh(cn);
            c(b, j) = cn;
            tanh_c(b, j) = tc;
            h(b, j) = o * tc;
        }
    }
}

}  // namespace

LstmState LstmLayer::step(const Tensor2& x, const LstmState& prev) const {
    require_shape(x, x.rows(), in(), "lstm input");
    require_shape(prev.h, x.rows(), hidden(), "lstm hidden state");
    require_shape(prev.c, x.rows(), hidden(), "lstm cell state");
    Tensor2 gates;
    matmul(x, wx_->value, gates);
    matmul(prev.h, wh_->value, gates, true);
    add_row_vector(gates, b_->value);
    LstmState next{Tensor2(x.rows(), hidden()), Tensor2(x.rows(), hidden())};
    Tensor2 tanh_c(x.rows(), hidden());
    lstm_cell(gates, prev.c, next.c, tanh_c, next.h);
    return next;
}

Tensor2 LstmLayer::forward(const Tensor2& xs, std::size_t steps, Cache& cache) const {
    if (xs.cols() != in()) fail(Errc::ShapeMismatch, "lstm input width differs from layer");
    const std::size_t batch = check_steps(xs, steps, "lstm input");
    const std::size_t hd = hidden();
    cache.steps = steps;
    cache.batch = batch;
    cache.x = xs;
    cache.h_prev = Tensor2(steps * batch, hd);
    cache.gates.assign(steps, Tensor2());
    cache.c.assign(steps + 1, Tensor2(batch, hd));
    cache.tanh_c.assign(steps, Tensor2(batch, hd));

    Tensor2 xw;
    matmul(xs, wx_->value, xw);
    Tensor2 out(steps * batch, hd);
    Tensor2 h(batch, hd);
    for (std::size_t t = 0; t < steps; ++t) {
        paste_rows(h, cache.h_prev, t * batch);
        Tensor2& gates = cache.gates[t];
        gates = Tensor2(batch, 4 * hd);
        copy_rows(xw, t * batch, gates);
        matmul(h, wh_->value, gates, true);
        add_row_vector(gates, b_->value);
        lstm_cell(gates, cache.c[t], cache.c[t + 1], cache.tanh_c[t], h);
        paste_rows(h, out, t * batch);
    }
    return out;
}

Tensor2 LstmLayer::backward(const Cache& cache, const Tensor2& dh) const {
    const std::size_t steps = cache.steps, batch = cache.batch, hd = hidden();
    require_shape(dh, steps * batch, hd, "lstm output gradient");
    const Tensor2 wh_t = transpose(wh_->value);
    Tensor2 da_all(steps * batch, 4 * hd);
    Tensor2 dh_next(batch, hd);
    Tensor2 dc_next(batch, hd);
    Tensor2 da(batch, 4 * hd);
    for (std::size_t t = steps; t-- > 0;) {
        const Tensor2& g = cache.gates[t];
        const Tensor2& c_prev = cache.c[t];
        const Tensor2& tc = cache.tanh_c[t];
        for (std::size_t b = 0; b < batch; ++b) {
            const double* gr = g.row(b);
            const double* dhr = dh.row(t * batch + b);
            double* dar = da.row(b);
            for (std::size_t j = 0; j < hd; ++j) {
                const double i = gr[j], f = gr[hd + j], cand = gr[2 * hd + j], o = gr[3 * hd + j];
                const double dht = dhr[j] + dh_next(b, j);
                const double tcv = tc(b, j);
                const double dout = dht * tcv;
                const double dc = dht * o * (1.0 - tcv * tcv) + dc_next(b, j);
                dar[j] = dc * cand * i * (1.0 - i);
                dar[hd + j] = dc * c_prev(b, j) * f * (1.0 - f);
                dar[2 * hd + j] = dc * i * (1.0 - cand * cand);
                dar[3 * hd + j] = dout * o * (1.0 - o);
                dc_next(b, j) = dc * f;
            }
        }
        matmul(da, wh_t, dh_next);
        paste_rows(da, da_all, t * batch);
    }
    matmul_tn(cache.h_prev, da_all, wh_->grad, true);
    matmul_tn(cache.x, da_all, wx_->grad, true);
    accumulate_column_sums(da_all, b_->grad);
    wx_->has_grad = wh_->has_grad = b_->has_grad = true;
    Tensor2 dx;
    matmul_nt(da_all, wx_->value, dx);
    return dx;
}

LstmStack::LstmStack(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     std::size_t layers, CounterRng& rng) {
    if (layers == 0) fail(Errc::InvalidConfig, "lstm stack needs at least one layer");
    for (std::size_t l = 0; l < layers; ++l) {
        layers_.emplace_back(store, name + "." + std::to_string(l), l == 0 ? in : hidden, hidden, rng);
    }
}

std::vector<LstmState> LstmStack::zero_state(std::size_t batch) const {
    std::vector<LstmState> s;
    for (const auto& l : layers_) s.push_back(l.zero_state(batch));
    return s;
}

Tensor2 LstmStack::step(const Tensor2& x, std::vector<LstmState>& states) const {
    if (states.size() != layers_.size()) fail(Errc::ShapeMismatch, "lstm state count differs from depth");
    const Tensor2* input = &x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        states[l] = layers_[l].step(*input, states[l]);
        input = &states[l].h;
    }
    return *input;
}

Tensor2 LstmStack::forward(const Tensor2& xs, std::size_t steps, Cache& cache) const {
    cache.assign(layers_.size(), {});
    Tensor2 h = layers_[0].forward(xs, steps, cache[0]);
    for (std::size_t l = 1; l < layers_.size(); ++l) h = layers_[l].forward(h, steps, cache[l]);
    return h;
}

Tensor2 LstmStack::backward(const Cache& cache, const Tensor2& dh) const {
    Tensor2 d = dh;
    for (std::size_t l = layers_.size(); l-- > 0;) d = layers_[l].backward(cache[l], d);
    return d;
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                                       bool causal, CounterRng& rng)
    : dim_(dim), heads_(heads), causal_(causal) {
    if (heads == 0 || dim % heads != 0) {
        fail(Errc::DimNotDivisible, "model dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
    }
    Param** ws[] = {&wq_, &wk_, &wv_, &wo_};
    Param** bs[] = {&bq_, &bk_, &bv_, &bo_};
    const char* tags[] = {"q", "k", "v", "o"};
    for (int i = 0; i < 4; ++i) {
        *ws[i] = &store.add(name + ".w" + tags[i], dim, dim);
        *bs[i] = &store.add(name + ".b" + tags[i], 1, dim);
        glorot_uniform((*ws[i])->value, rng);
    }
}

Tensor2 MultiHeadAttention::forward(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::size_t steps,
                                    Cache& cache, Exec exec) const {
    for (const Tensor2* t : {&q, &k, &v}) require_shape(*t, q.rows(), dim_, "attention input");
    const std::size_t batch = check_steps(q, steps, "attention input");
    const std::size_t dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    cache.steps = steps;
    cache.batch = batch;
    cache.q_in = q;
    cache.k_in = k;
    cache.v_in = v;
    cache.q = dense_forward(q, wq_->value, bq_->value, exec);
    cache.k = dense_forward(k, wk_->value, bk_->value, exec);
    cache.v = dense_forward(v, wv_->value, bv_->value, exec);
    cache.probs.assign(batch * heads_, Tensor2(steps, steps));
    cache.concat = Tensor2(steps * batch, dim_);

    parallel_for(batch * heads_, exec, [&](std::size_t bh) {
        const std::size_t b = bh / heads_, off = (bh % heads_) * dh;
        Tensor2& p = cache.probs[bh];
        for (std::size_t i = 0; i < steps; ++i) {
            const double* qi = cache.q.row(i * batch + b) + off;
            const std::size_t last = causal_ ? i + 1 : steps;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < last; ++j) {
                const double* kj = cache.k.row(j * batch + b) + off;
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                p(i, j) = s * scale;
                mx = std::max(mx, p(i, j));
            }
            double total = 0.0;
            for (std::size_t j = 0; j < last; ++j) total += p(i, j) = std::exp(p(i, j) - mx);
            double* oi = cache.concat.row(i * batch + b) + off;
            for (std::size_t j = 0; j < last; ++j) {
                p(i, j) /= total;
                const double* vj = cache.v.row(j * batch + b) + off;
                for (std::size_t d = 0; d < dh; ++d) oi[d] += p(i, j) * vj[d];
            }
        }
    }, 1);
    return dense_forward(cache.concat, wo_->value, bo_->value, exec);
}

MultiHeadAttention::Grads MultiHeadAttention::backward(const Cache& cache, const Tensor2& dy, Exec exec) const {
    const std::size_t steps = cache.steps, batch = cache.batch, dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    require_shape(dy, steps * batch, dim_, "attention output gradient");

    matmul_tn(cache.concat, dy, wo_->grad, true, exec);
    accumulate_column_sums(dy, bo_->grad);
    Tensor2 dconcat;
    matmul_nt(dy, wo_->value, dconcat, false, exec);

    Tensor2 dq(steps * batch, dim_), dk(steps * batch, dim_), dv(steps * batch, dim_);
    parallel_for(batch * heads_, exec, [&](std::size_t bh) {
        const std::size_t b = bh / heads_, off = (bh % heads_) * dh;
        const Tensor2& p = cache.probs[bh];
        std::vector<double> dp(steps);
        for (std::size_t i = 0; i < steps; ++i) {
            const std::size_t last = causal_ ? i + 1 : steps;
            const double* doi = dconcat.row(i * batch + b) + off;
            double dot = 0.0;
            for (std::size_t j = 0; j < last; ++j) {
                const double* vj = cache.v.row(j * batch + b) + off;
                double* dvj = dv.row(j * batch + b) + off;
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d) {
                    s += doi[d] * vj[d];
                    dvj[d] += p(i, j) * doi[d];
                }
                dp[j] = s;
                dot += p(i, j) * s;
            }
            const double* qi = cache.q.row(i * batch + b) + off;
            double* dqi = dq.row(i * batch + b) + off;
            for (std::size_t j = 0; j < last; ++j) {
                const double ds = p(i, j) * (dp[j] - dot) * scale;
                const double* kj = cache.k.row(j * batch + b) + off;
                double* dkj = dk.row(j * batch + b) + off;
                for (std::size_t d = 0; d < dh; ++d) {
                    dqi[d] += ds * kj[d];
                    dkj[d] += ds * qi[d];
                }
            }
        }
    }, 1);

    Grads g;
    const Tensor2* inputs[] = {&cache.q_in, &cache.k_in, &cache.v_in};
    Tensor2* dproj[] = {&dq, &dk, &dv};
    Tensor2* outs[] = {&g.dq, &g.dk, &g.dv};
    Param* ws[] = {wq_, wk_, wv_};
    Param* bs[] = {bq_, bk_, bv_};
    for (int i = 0; i < 3; ++i) {
        matmul_tn(*inputs[i], *dproj[i], ws[i]->grad, true, exec);
        accumulate_column_sums(*dproj[i], bs[i]->grad);
        matmul_nt(*dproj[i], ws[i]->value, *outs[i], false, exec);
    }
    for (Param* p : {wq_, wk_, wv_, wo_, bq_, bk_, bv_, bo_}) p->has_grad = true;
    return g;
}

Tensor2 MultiHeadAttention::step(const Tensor2& x, Incremental& state) const {
    require_shape(x, 1, dim_, "attention step input");
    const std::size_t dh = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor2 q = dense_forward(x, wq_->value, bq_->value, Exec::serial);
    const Tensor2 k = dense_forward(x, wk_->value, bk_->value, Exec::serial);
    const Tensor2 v = dense_forward(x, wv_->value, bv_->value, Exec::serial);
    state.k.insert(state.k.end(), k.data().begin(), k.data().end());
    state.v.insert(state.v.end(), v.data().begin(), v.data().end());
    const std::size_t n = ++state.len;

    Tensor2 concat(1, dim_);
    std::vector<double> p(n);
    for (std::size_t h = 0; h < heads_; ++h) {
        const std::size_t off = h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            const double* kj = state.k.data() + j * dim_ + off;
            double s = 0.0;
            for (std::size_t d = 0; d < dh; ++d) s += q(0, off + d) * kj[d];
            p[j] = s * scale;
            mx = std::max(mx, p[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += p[j] = std::exp(p[j] - mx);
        for (std::size_t j = 0; j < n; ++j) {
            const double w = p[j] / total;
            const double* vj = state.v.data() + j * dim_ + off;
            for (std::size_t d = 0; d < dh; ++d) concat(0, off + d) += w * vj[d];
        }
    }
    return dense_forward(concat, wo_->value, bo_->value, Exec::serial);
}

}  // namespace obsr::nn
