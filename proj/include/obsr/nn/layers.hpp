#pragma once

// Parameters, feed-forward layers, losses, the Adam optimizer, finite-
// difference gradient checking, and checkpoints.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "obsr/nn/tensor.hpp"
#include "obsr/random.hpp"

namespace obsr::nn {

struct Param {
    std::string name;
    Tensor2 value;
    Tensor2 grad;
    Tensor2 m;  ///< Adam first moment
    Tensor2 v;  ///< Adam second moment
    bool has_grad = false;  ///< set by any backward pass that touched grad
};

/// Owns every trainable tensor of a model. References handed out by add()
/// stay valid for the store's lifetime.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Param& add(const std::string& name, std::size_t rows, std::size_t cols);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::deque<Param>& params() noexcept { return params_; }
    const std::deque<Param>& params() const noexcept { return params_; }

    std::int64_t step() const noexcept { return step_; }
    void set_step(std::int64_t s);
    void zero_grad();
    std::size_t parameter_count() const;

private:
    std::deque<Param> params_;
    std::map<std::string, std::size_t> index_;
    std::int64_t step_ = 0;
};

enum class LossKind { smooth_l1, l1, cross_entropy, hybrid_hmp };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
    double lr = 0.001;
    int batch_size = 32;
    int epochs = 50;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::smooth_l1;
    double geo_weight = 0.7;
    double dropout_p = 0.2;

    void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& c);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig base = {});

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor2& w, CounterRng& rng);
void uniform_fill(Tensor2& w, double bound, CounterRng& rng);

struct DenseGrads {
    Tensor2 dw;
    Tensor2 db;
    Tensor2 dx;
};

Tensor2 dense_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b, Exec exec = Exec::parallel);
DenseGrads dense_backward(const Tensor2& x, const Tensor2& w, const Tensor2& dy, Exec exec = Exec::parallel);

/// y = xW + b over parameters held in a store.
class Dense {
public:
    Dense() = default;
    Dense(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, CounterRng& rng);

    Tensor2 forward(const Tensor2& x) const;
    /// Accumulates dW and db into the store and returns dx.
    Tensor2 backward(const Tensor2& x, const Tensor2& dy) const;

    std::size_t in() const { return w_->value.rows(); }
    std::size_t out() const { return w_->value.cols(); }
    Param& weight() const { return *w_; }
    Param& bias() const { return *b_; }

private:
    Param* w_ = nullptr;
    Param* b_ = nullptr;
};

Tensor2 relu(const Tensor2& x);
/// dy masked where x <= 0.
Tensor2 relu_backward(const Tensor2& x, const Tensor2& dy);
double sigmoid(double x) noexcept;
Tensor2 sigmoid(const Tensor2& x);
/// Takes the forward output y = sigmoid(x).
Tensor2 sigmoid_backward(const Tensor2& y, const Tensor2& dy);

/// Inverted dropout. In training mode each element is zeroed with probability
/// p and survivors are scaled by 1/(1-p); `mask` receives the per-element
/// factor for the backward pass. Inference mode is the identity.
Tensor2 dropout(const Tensor2& x, double p, bool training, CounterRng& rng, Tensor2* mask = nullptr);
Tensor2 hadamard(const Tensor2& a, const Tensor2& b);

struct LossOutput {
    double value = 0.0;
    Tensor2 grad;  ///< d loss / d prediction (or logits)
};

/// Mean over all elements of 0.5 e^2 / beta if |e| < beta else |e| - 0.5 beta.
LossOutput smooth_l1(const Tensor2& pred, const Tensor2& target, double beta = 1.0);
/// Mean absolute error; subgradient 0 at e = 0.
LossOutput l1(const Tensor2& pred, const Tensor2& target);

Tensor2 softmax_rows(const Tensor2& logits);

/// Mean over rows of -log softmax(logits)[class]. Rows with weight 0 are
/// masked out; the mean is over the weight sum.
LossOutput cross_entropy(const Tensor2& logits, std::span<const int> classes, std::span<const double> weights = {});

/// (1 - w) * cross_entropy + w * sum_c softmax_c * cost_c per row, where cost
/// is rows x classes.
LossOutput hybrid_loss(const Tensor2& logits, std::span<const int> classes, const Tensor2& cost, double w,
                       std::span<const double> weights = {});

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update with bias correction over every parameter, then zero grads.
void adam_step(ParamStore& store, const AdamConfig& cfg);

struct GradCheckReport {
    std::vector<std::pair<std::string, double>> rel_error;  ///< per tensor
    double worst = 0.0;
    double tol = 0.0;
    bool passed = false;
};

/// Central-difference check of every parameter. `loss` must compute the loss
/// and, when its argument is true, accumulate analytic gradients into the
/// store. The error per tensor is ||analytic - numeric|| / max(||analytic||,
/// ||numeric||, 1e-4). `max_entries` > 0 checks an evenly strided subset per tensor.
GradCheckReport grad_check(ParamStore& store, const std::function<double(bool)>& loss, double tol,
                           double h = 1e-5, std::size_t max_entries = 0);

void save_checkpoint(const ParamStore& store, const nlohmann::ordered_json& config, const std::string& path);
/// Restores values, moments and step into a store of identical layout;
/// returns the saved config.
nlohmann::ordered_json load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace obsr::nn
