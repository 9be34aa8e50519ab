#include "obsr/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace obsr::nn {

Param& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) fail(Errc::InvalidConfig, "duplicate parameter '" + name + "'");
    index_[name] = params_.size();
    Param& p = params_.emplace_back();
    p.name = name;
    p.value = Tensor2(rows, cols);
    p.grad = Tensor2(rows, cols);
    p.m = Tensor2(rows, cols);
    p.v = Tensor2(rows, cols);
    return p;
}

Param& ParamStore::get(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) fail(Errc::InvalidConfig, "no parameter '" + name + "'");
    return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) fail(Errc::InvalidConfig, "no parameter '" + name + "'");
    return params_[it->second];
}

void ParamStore::set_step(std::int64_t s) {
    if (s < 0) fail(Errc::InvalidConfig, "negative optimizer step");
    step_ = s;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) {
        p.grad.fill(0.0);
        p.has_grad = false;
    }
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::smooth_l1: return "smooth_l1";
        case LossKind::l1: return "l1";
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::hybrid_hmp: return "hybrid_hmp";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& s) {
    for (auto k : {LossKind::smooth_l1, LossKind::l1, LossKind::cross_entropy, LossKind::hybrid_hmp}) {
        if (to_string(k) == s) return k;
    }
    fail(Errc::InvalidConfig, "unknown loss '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) fail(Errc::InvalidConfig, "lr must be positive");
    if (batch_size < 1) fail(Errc::InvalidConfig, "batch_size must be >= 1");
    if (epochs < 0) fail(Errc::InvalidConfig, "epochs must be >= 0");
    if (!(geo_weight >= 0.0 && geo_weight <= 1.0)) fail(Errc::InvalidConfig, "geo_weight must lie in [0, 1]");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail(Errc::InvalidConfig, "dropout_p must lie in [0, 1)");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["loss"] = to_string(c.loss);
    j["geo_weight"] = c.geo_weight;
    j["dropout_p"] = c.dropout_p;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig c) {
    try {
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("loss")) c.loss = parse_loss_kind(j.at("loss").get<std::string>());
        if (j.contains("geo_weight")) c.geo_weight = j.at("geo_weight").get<double>();
        if (j.contains("dropout_p")) c.dropout_p = j.at("dropout_p").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

void uniform_fill(Tensor2& w, double bound, CounterRng& rng) {
    for (double& x : w.data()) x = rng.uniform(-bound, bound);
}

void glorot_uniform(Tensor2& w, CounterRng& rng) {
    uniform_fill(w, std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols())), rng);
}

Tensor2 dense_forward(const Tensor2& x, const Tensor2& w, const Tensor2& b, Exec exec) {
    if (x.cols() != w.rows()) fail(Errc::ShapeMismatch, "dense input width differs from weight rows");
    require_shape(b, 1, w.cols(), "dense bias");
    Tensor2 y;
    matmul(x, w, y, false, exec);
    add_row_vector(y, b);
    return y;
}

DenseGrads dense_backward(const Tensor2& x, const Tensor2& w, const Tensor2& dy, Exec exec) {
    if (x.cols() != w.rows()) fail(Errc::ShapeMismatch, "dense input width differs from weight rows");
    require_shape(dy, x.rows(), w.cols(), "dense output gradient");
    DenseGrads g;
    matmul_tn(x, dy, g.dw, false, exec);
    g.db = Tensor2(1, w.cols());
    accumulate_column_sums(dy, g.db);
    matmul_nt(dy, w, g.dx, false, exec);
    return g;
}

Dense::Dense(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, CounterRng& rng) {
    w_ = &store.add(name + ".w", in, out);
    b_ = &store.add(name + ".b", 1, out);
    glorot_uniform(w_->value, rng);
}

Tensor2 Dense::forward(const Tensor2& x) const { return dense_forward(x, w_->value, b_->value); }

Tensor2 Dense::backward(const Tensor2& x, const Tensor2& dy) const {
    require_shape(dy, x.rows(), out(), "dense output gradient");
    matmul_tn(x, dy, w_->grad, true);
    accumulate_column_sums(dy, b_->grad);
    w_->has_grad = b_->has_grad = true;
    Tensor2 dx;
    matmul_nt(dy, w_->value, dx);
    return dx;
}

Tensor2 relu(const Tensor2& x) {
    Tensor2 y = x;
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor2 relu_backward(const Tensor2& x, const Tensor2& dy) {
    if (!x.same_shape(dy)) fail(Errc::ShapeMismatch, "relu backward shapes differ");
    Tensor2 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        if (!(x.data()[i] > 0.0)) dx.data()[i] = 0.0;
    }
    return dx;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor2 sigmoid(const Tensor2& x) {
    Tensor2 y = x;
    for (double& v : y.data()) v = sigmoid(v);
    return y;
}

Tensor2 sigmoid_backward(const Tensor2& y, const Tensor2& dy) {
    if (!y.same_shape(dy)) fail(Errc::ShapeMismatch, "sigmoid backward shapes differ");
    Tensor2 dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double s = y.data()[i];
        dx.data()[i] *= s * (1.0 - s);
    }
    return dx;
}

Tensor2 dropout(const Tensor2& x, double p, bool training, CounterRng& rng, Tensor2* mask) {
    if (!(p >= 0.0 && p < 1.0)) fail(Errc::InvalidConfig, "dropout p must lie in [0, 1)");
    if (!training || p == 0.0) {
        if (mask) *mask = Tensor2(x.rows(), x.cols(), 1.0);
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor2 m(x.rows(), x.cols());
    Tensor2 y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double f = rng.uniform() < p ? 0.0 : keep_scale;
        m.data()[i] = f;
        y.data()[i] *= f;
    }
    if (mask) *mask = std::move(m);
    return y;
}

Tensor2 hadamard(const Tensor2& a, const Tensor2& b) {
    if (!a.same_shape(b)) fail(Errc::ShapeMismatch, "elementwise product shapes differ");
    Tensor2 out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

LossOutput smooth_l1(const Tensor2& pred, const Tensor2& target, double beta) {
    if (!pred.same_shape(target)) fail(Errc::ShapeMismatch, "smooth_l1 shapes differ");
    if (pred.empty()) fail(Errc::ShapeMismatch, "smooth_l1 on empty tensors");
    LossOutput out;
    out.grad = Tensor2(pred.rows(), pred.cols());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - target.data()[i];
        if (std::abs(e) < beta) {
            out.value += 0.5 * e * e / beta;
            out.grad.data()[i] = e / beta / n;
        } else {
            out.value += std::abs(e) - 0.5 * beta;
            out.grad.data()[i] = (e > 0 ? 1.0 : -1.0) / n;
        }
    }
    out.value /= n;
    return out;
}

LossOutput l1(const Tensor2& pred, const Tensor2& target) {
    if (!pred.same_shape(target)) fail(Errc::ShapeMismatch, "l1 shapes differ");
    if (pred.empty()) fail(Errc::ShapeMismatch, "l1 on empty tensors");
    LossOutput out;
    out.grad = Tensor2(pred.rows(), pred.cols());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred.data()[i] - target.data()[i];
        out.value += std::abs(e);
        out.grad.data()[i] = (e > 0 ? 1.0 : e < 0 ? -1.0 : 0.0) / n;
    }
    out.value /= n;
    return out;
}

Tensor2 softmax_rows(const Tensor2& logits) {
    Tensor2 p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double* r = p.row(i);
        const double mx = *std::max_element(r, r + p.cols());
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            r[j] = std::exp(r[j] - mx);
            s += r[j];
        }
        for (std::size_t j = 0; j < p.cols(); ++j) r[j] /= s;
    }
    return p;
}

namespace {

double weight_sum(std::size_t rows, std::span<const double> weights) {
    if (weights.empty()) return static_cast<double>(rows);
    if (weights.size() != rows) fail(Errc::ShapeMismatch, "loss weights do not match rows");
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

void check_classes(const Tensor2& logits, std::span<const int> classes) {
    if (classes.size() != logits.rows()) fail(Errc::ShapeMismatch, "class count does not match logits rows");
    for (int c : classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= logits.cols()) {
            fail(Errc::ClassOutOfRange, "class " + std::to_string(c) + " outside [0, " + std::to_string(logits.cols()) + ")");
        }
    }
}

}  // namespace

LossOutput cross_entropy(const Tensor2& logits, std::span<const int> classes, std::span<const double> weights) {
    return hybrid_loss(logits, classes, Tensor2(logits.rows(), logits.cols()), 0.0, weights);
}

LossOutput hybrid_loss(const Tensor2& logits, std::span<const int> classes, const Tensor2& cost, double w,
                       std::span<const double> weights) {
    check_classes(logits, classes);
    require_shape(cost, logits.rows(), logits.cols(), "geo cost");
    if (!(w >= 0.0 && w <= 1.0)) fail(Errc::InvalidConfig, "geo weight must lie in [0, 1]");
    const double total = weight_sum(logits.rows(), weights);
    LossOutput out;
    out.grad = Tensor2(logits.rows(), logits.cols());
    if (total <= 0.0) return out;
    const Tensor2 p = softmax_rows(logits);
    const std::size_t nc = logits.cols();
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double rw = weights.empty() ? 1.0 : weights[i];
        if (rw == 0.0) continue;
        const double* pr = p.row(i);
        const double* cr = cost.row(i);
        const auto cls = static_cast<std::size_t>(classes[i]);
        double expected = 0.0;
        for (std::size_t c = 0; c < nc; ++c) expected += pr[c] * cr[c];
        // log-softmax computed directly keeps tiny probabilities finite
        const double* lr = logits.row(i);
        const double mx = *std::max_element(lr, lr + nc);
        double s = 0.0;
        for (std::size_t c = 0; c < nc; ++c) s += std::exp(lr[c] - mx);
        const double ce = -(lr[cls] - mx - std::log(s));
        out.value += rw * ((1.0 - w) * ce + w * expected);
        double* g = out.grad.row(i);
        for (std::size_t c = 0; c < nc; ++c) {
            const double dce = pr[c] - (c == cls ? 1.0 : 0.0);
            const double dgeo = pr[c] * (cr[c] - expected);
            g[c] = rw * ((1.0 - w) * dce + w * dgeo) / total;
        }
    }
    out.value /= total;
    return out;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    bool any = false;
    for (const auto& p : store.params()) any = any || p.has_grad;
    if (!any) fail(Errc::UninitializedGrads, "adam_step called before any backward pass");
    store.set_step(store.step() + 1);
    const double t = static_cast<double>(store.step());
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& p : store.params()) {
        check_finite(p.grad, p.name.c_str());
        auto val = p.value.data();
        auto g = p.grad.data();
        auto m = p.m.data();
        auto v = p.v.data();
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            val[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    store.zero_grad();
}

namespace {
// tensors whose true gradient vanishes (e.g. attention key bias) are judged
// on absolute error scaled by this floor instead of on noise over noise
constexpr double kGradCheckFloor = 1e-4;
}  // namespace

GradCheckReport grad_check(ParamStore& store, const std::function<double(bool)>& loss, double tol, double h,
                           std::size_t max_entries) {
    store.zero_grad();
    const double base = loss(true);
    std::vector<Tensor2> analytic;
    for (const auto& p : store.params()) analytic.push_back(p.grad);
    store.zero_grad();
    if (loss(false) != base || loss(false) != base) {
        fail(Errc::NonDeterministicModel, "loss differs between identical evaluations");
    }

    GradCheckReport rep;
    rep.tol = tol;
    std::size_t idx = 0;
    for (auto& p : store.params()) {
        const Tensor2& a = analytic[idx++];
        const std::size_t n = p.value.size();
        const std::size_t stride = max_entries == 0 || n <= max_entries ? 1 : (n + max_entries - 1) / max_entries;
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < n; i += stride) {
            double& x = p.value.data()[i];
            const double saved = x;
            x = saved + h;
            const double up = loss(false);
            x = saved - h;
            const double down = loss(false);
            x = saved;
            const double num = (up - down) / (2.0 * h);
            const double an = a.data()[i];
            diff2 += (an - num) * (an - num);
            a2 += an * an;
            n2 += num * num;
        }
        const double denom = std::max(std::sqrt(std::max(a2, n2)), kGradCheckFloor);
        const double rel = std::sqrt(diff2) / denom;
        rep.rel_error.emplace_back(p.name, rel);
        rep.worst = std::max(rep.worst, rel);
    }
    rep.passed = rep.worst <= tol;
    store.zero_grad();
    return rep;
}

namespace {

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t hsh = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        hsh ^= c;
        hsh *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << hsh;
    return os.str();
}

}  // namespace

void save_checkpoint(const ParamStore& store, const nlohmann::ordered_json& config, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "obsr-checkpoint";
    j["version"] = 1;
    j["config"] = config;
    j["config_hash"] = fnv1a_hex(config.dump());
    j["step"] = store.step();
    auto& arr = j["tensors"] = nlohmann::ordered_json::array();
    for (const auto& p : store.params()) {
        nlohmann::ordered_json t;
        t["name"] = p.name;
        t["shape"] = {p.value.rows(), p.value.cols()};
        t["value"] = p.value.vec();
        t["m"] = p.m.vec();
        t["v"] = p.v.vec();
        arr.push_back(std::move(t));
    }
    std::ofstream out(path);
    if (!out) fail(Errc::IOError, "cannot write checkpoint " + path);
    out << j.dump() << '\n';
    if (!out) fail(Errc::IOError, "failed writing checkpoint " + path);
}

nlohmann::ordered_json load_checkpoint(ParamStore& store, const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::FileNotFound, "checkpoint " + path);
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
        if (j.at("format") != "obsr-checkpoint" || j.at("version") != 1) {
            fail(Errc::InvalidConfig, "unsupported checkpoint format in " + path);
        }
        if (j.at("config_hash") != fnv1a_hex(j.at("config").dump())) {
            fail(Errc::InvalidConfig, "checkpoint config hash mismatch in " + path);
        }
        const auto& arr = j.at("tensors");
        if (arr.size() != store.params().size()) fail(Errc::ShapeMismatch, "checkpoint tensor count differs from model");
        for (const auto& t : arr) {
            Param& p = store.get(t.at("name").get<std::string>());
            const auto rows = t.at("shape").at(0).get<std::size_t>();
            const auto cols = t.at("shape").at(1).get<std::size_t>();
            require_shape(p.value, rows, cols, p.name.c_str());
            p.value = Tensor2(rows, cols, t.at("value").get<std::vector<double>>());
            p.m = Tensor2(rows, cols, t.at("m").get<std::vector<double>>());
            p.v = Tensor2(rows, cols, t.at("v").get<std::vector<double>>());
        }
        store.set_step(j.at("step").get<std::int64_t>());
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, "malformed checkpoint " + path + ": " + e.what());
    }
    store.zero_grad();
    return j.at("config");
}

}  // namespace obsr::nn
