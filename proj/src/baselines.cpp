#include "obsr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obsr/parallel.hpp"
#include "obsr/trajprep.hpp"

namespace obsr {

using nn::Tensor2;

std::string to_string(Task t) {
    switch (t) {
        case Task::strpp: return "strpp";
        case Task::hpp: return "hpp";
        case Task::cap: return "cap";
        case Task::tte: return "tte";
        case Task::hmp: return "hmp";
    }
    return "?";
}

Task parse_task(const std::string& s) {
    for (auto t : {Task::strpp, Task::hpp, Task::cap, Task::tte, Task::hmp}) {
        if (to_string(t) == s) return t;
    }
    fail(Errc::InvalidConfig, "unknown task '" + s + "'");
}

bool is_trajectory_task(Task t) noexcept { return t == Task::tte || t == Task::hmp; }

nn::TrainConfig default_train_config(Task t) {
    nn::TrainConfig c;
    switch (t) {
        case Task::strpp:
        case Task::hpp: c.loss = nn::LossKind::smooth_l1; break;
        case Task::cap:
        case Task::tte: c.loss = nn::LossKind::l1; break;
        case Task::hmp:
            c.loss = nn::LossKind::hybrid_hmp;
            c.epochs = 10;
            break;
    }
    return c;
}

std::string to_string(SequenceTask t) { return t == SequenceTask::tte ? "tte" : "hmp"; }

// ---------------------------------------------------------------- standardizer

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows, std::size_t dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    if (rows.empty()) return s;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t j = 0; j < dim; ++j) s.mean[j] += r[j];
    for (double& m : s.mean) m /= n;
    std::vector<double> var(dim, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < dim; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < dim; ++j) {
        const double sd = std::sqrt(var[j] / n);
        s.scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
}

void Standardizer::apply(const std::vector<double>& in, double* out) const {
    if (in.size() != mean.size()) fail(Errc::DimensionMismatch, "embedding width differs from the fitted standardizer");
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
}

nlohmann::ordered_json to_json(const Standardizer& s) {
    return nlohmann::ordered_json{{"mean", s.mean}, {"scale", s.scale}};
}

Standardizer standardizer_from_json(const nlohmann::ordered_json& j) {
    Standardizer s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    if (s.mean.size() != s.scale.size()) fail(Errc::DimensionMismatch, "standardizer mean/scale widths differ");
    return s;
}

// ---------------------------------------------------------------- shared helpers

namespace {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, CounterRng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(std::span(order), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    }
    return out;
}

// Shuffle, stable-sort by length, cut into batches, shuffle the batch order.
std::vector<std::vector<std::size_t>> length_bucketed_batches(const std::vector<std::size_t>& lengths, std::size_t batch,
                                                              CounterRng& rng) {
    std::vector<std::size_t> order(lengths.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(std::span(order), rng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
    }
    shuffle(std::span(out), rng);
    return out;
}

const std::vector<double>& lookup(const EmbeddingMatrix& m, CellId c, const std::vector<double>& zero,
                                  std::size_t& missing) {
    const auto* v = m.find(c);
    if (!v) {
        ++missing;
        return zero;
    }
    if (v->size() != static_cast<std::size_t>(m.dim)) fail(Errc::DimensionMismatch, "embedding of " + c.to_string());
    return *v;
}

nn::AdamConfig adam_for(const nn::TrainConfig& cfg) {
    nn::AdamConfig a;
    a.lr = cfg.lr;
    return a;
}

nn::LossOutput regression_loss(nn::LossKind kind, const Tensor2& pred, const Tensor2& target) {
    switch (kind) {
        case nn::LossKind::smooth_l1: return nn::smooth_l1(pred, target);
        case nn::LossKind::l1: return nn::l1(pred, target);
        default: fail(Errc::InvalidConfig, "loss '" + to_string(kind) + "' is not a regression loss");
    }
}

std::vector<double> column(const Tensor2& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

// ---------------------------------------------------------------- region models

RegionModel::RegionModel(std::size_t in_dim_, bool sigmoid_head_, double dropout_p_, std::uint64_t seed)
    : in_dim(in_dim_), sigmoid_head(sigmoid_head_), dropout_p(dropout_p_) {
    if (in_dim == 0) fail(Errc::DimensionMismatch, "region model needs a positive input width");
    CounterRng rng(derive_seed(seed, "region-init"));
    l1 = nn::Dense(store, "fc1", in_dim, 50, rng);
    l2 = nn::Dense(store, "fc2", 50, 100, rng);
    l3 = nn::Dense(store, "fc3", 100, 50, rng);
    out = nn::Dense(store, "out", 50, 1, rng);
    // targets are standardized, so a zero head starts at the train mean
    if (!sigmoid_head) out.weight().value.fill(0.0);
    features.mean.assign(in_dim, 0.0);
    features.scale.assign(in_dim, 1.0);
}

namespace {

struct MlpPass {
    Tensor2 x, a1, r1, a2, r2, mask, d2, a3, r3, z, y;
};

void mlp_forward(const RegionModel& m, MlpPass& p, bool training, CounterRng* rng) {
    p.a1 = m.l1.forward(p.x);
    p.r1 = nn::relu(p.a1);
    p.a2 = m.l2.forward(p.r1);
    p.r2 = nn::relu(p.a2);
    CounterRng none(0);
    p.d2 = nn::dropout(p.r2, m.dropout_p, training, rng ? *rng : none, &p.mask);
    p.a3 = m.l3.forward(p.d2);
    p.r3 = nn::relu(p.a3);
    p.z = m.out.forward(p.r3);
    p.y = m.sigmoid_head ? nn::sigmoid(p.z) : p.z;
}

void mlp_backward(const RegionModel& m, const MlpPass& p, const Tensor2& dy) {
    const Tensor2 dz = m.sigmoid_head ? nn::sigmoid_backward(p.y, dy) : dy;
    const Tensor2 dr3 = m.out.backward(p.r3, dz);
    const Tensor2 dd2 = m.l3.backward(p.d2, nn::relu_backward(p.a3, dr3));
    const Tensor2 dr1 = m.l2.backward(p.r1, nn::relu_backward(p.a2, nn::hadamard(dd2, p.mask)));
    m.l1.backward(p.x, nn::relu_backward(p.a1, dr1));
}

Tensor2 standardized_rows(const RegionModel& m, const std::vector<std::vector<double>>& rows) {
    Tensor2 x(rows.size(), m.in_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) m.features.apply(rows[i], x.row(i));
    return x;
}

}  // namespace

std::vector<double> RegionModel::predict(const std::vector<std::vector<double>>& rows) const {
    if (rows.empty()) return {};
    MlpPass p;
    p.x = standardized_rows(*this, rows);
    mlp_forward(*this, p, false, nullptr);
    std::vector<double> out = column(p.y);
    if (!sigmoid_head) {
        for (double& v : out) v = v * target_scale + target_mean;
    }
    return out;
}

nlohmann::ordered_json RegionModel::describe() const {
    nlohmann::ordered_json d;
    d["model"] = sigmoid_head ? "region_mlp_sigmoid" : "region_mlp";
    d["in_dim"] = in_dim;
    d["hidden"] = {50, 100, 50};
    d["dropout_p"] = dropout_p;
    d["dropout_after"] = "fc2";
    d["features"] = to_json(features);
    d["target_mean"] = target_mean;
    d["target_scale"] = target_scale;
    return d;
}

std::shared_ptr<RegionModel> region_model_from_description(const nlohmann::ordered_json& d) {
    try {
        const std::string kind = d.at("model").get<std::string>();
        if (kind != "region_mlp" && kind != "region_mlp_sigmoid") fail(Errc::InvalidConfig, "not a region model: " + kind);
        auto m = std::make_shared<RegionModel>(d.at("in_dim").get<std::size_t>(), kind == "region_mlp_sigmoid",
                                               d.at("dropout_p").get<double>(), 0);
        m->features = standardizer_from_json(d.at("features"));
        m->target_mean = d.at("target_mean").get<double>();
        m->target_scale = d.at("target_scale").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("region model description: ") + e.what());
    }
}

namespace {

struct RegionSide {
    std::vector<CellId> cells;
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
};

RegionSide region_side(const RegionTaskInstance& inst, const std::vector<std::string>& ids, std::size_t& missing) {
    RegionSide s;
    const std::vector<double> zero(static_cast<std::size_t>(std::max(inst.embeddings.dim, 0)), 0.0);
    for (const auto& id : ids) {
        const CellId c = CellId::from_string(id);
        const auto it = inst.targets.rows.find(c);
        if (it == inst.targets.rows.end()) fail(Errc::MissingTarget, "manifest cell " + id + " has no target");
        s.cells.push_back(c);
        s.rows.push_back(lookup(inst.embeddings, c, zero, missing));
        s.targets.push_back(it->second.target);
    }
    return s;
}

MetricReport region_report(bool intensity, const std::vector<double>& y, const std::vector<double>& yhat) {
    MetricReport r = regression_metrics(y, yhat);
    if (intensity) {
        r.task = "cap";
        r.erase("MAPE");
        r.erase("sMAPE");
        r.counts.erase("mape_excluded");
        if (y.size() >= 2) {
            try {
                r.set("R2", obsr::r2(y, yhat));
            } catch (const Error& e) {
                if (e.code() != Errc::ZeroVariance) throw;
            }
        }
    } else {
        r.task = "region_regression";
    }
    return r;
}

RegionTrainResult train_region(const RegionTaskInstance& inst, const nn::TrainConfig& cfg, bool intensity, bool evaluate) {
    cfg.validate();
    if (inst.embeddings.dim <= 0) fail(Errc::DimensionMismatch, "embedding matrix has no dimensions");
    if (intensity && inst.targets.target_kind != TargetKind::intensity) {
        fail(Errc::InvalidConfig, "intensity model needs intensity targets");
    }
    if (!intensity && inst.targets.target_kind != TargetKind::mean_value) {
        fail(Errc::InvalidConfig, "region regressor needs mean_value targets");
    }
    RegionTrainResult res;
    const RegionSide train = region_side(inst, inst.manifest.train, res.missing_embeddings);
    if (train.cells.empty()) fail(Errc::EmptyTrainSet, "no training cells");
    if (intensity) {
        for (double t : train.targets) {
            if (!(t >= 0.0 && t <= 1.0)) fail(Errc::TargetOutOfRange, "intensity target " + std::to_string(t) + " outside [0, 1]");
        }
    }

    auto model = std::make_shared<RegionModel>(static_cast<std::size_t>(inst.embeddings.dim), intensity, cfg.dropout_p, cfg.seed);
    model->features = Standardizer::fit(train.rows, model->in_dim);
    if (!intensity) {
        const double n = static_cast<double>(train.targets.size());
        const double mean = std::accumulate(train.targets.begin(), train.targets.end(), 0.0) / n;
        double var = 0.0;
        for (double t : train.targets) var += (t - mean) * (t - mean);
        const double sd = std::sqrt(var / n);
        model->target_mean = mean;
        model->target_scale = sd > 1e-12 ? sd : 1.0;
    }
    for (CellId c : train.cells) res.audit.fit_ids.insert(c.to_string());

    const Tensor2 x_all = standardized_rows(*model, train.rows);
    Tensor2 y_all(train.targets.size(), 1);
    for (std::size_t i = 0; i < train.targets.size(); ++i) {
        y_all(i, 0) = (train.targets[i] - model->target_mean) / model->target_scale;
    }

    CounterRng batch_rng(derive_seed(cfg.seed, "region-batches"));
    CounterRng drop_rng(derive_seed(cfg.seed, "region-dropout"));
    const nn::AdamConfig adam = adam_for(cfg);
    const std::size_t dim = model->in_dim;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& batch : shuffled_batches(train.cells.size(), static_cast<std::size_t>(cfg.batch_size), batch_rng)) {
            MlpPass p;
            p.x = Tensor2(batch.size(), dim);
            Tensor2 yb(batch.size(), 1);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                std::copy(x_all.row(batch[i]), x_all.row(batch[i]) + dim, p.x.row(i));
                yb(i, 0) = y_all(batch[i], 0);
            }
            mlp_forward(*model, p, true, &drop_rng);
            const auto loss = regression_loss(cfg.loss, p.y, yb);
            mlp_backward(*model, p, loss.grad);
            nn::adam_step(model->store, adam);
            total += loss.value * static_cast<double>(batch.size());
        }
        res.epoch_losses.push_back(total / static_cast<double>(train.cells.size()));
    }

    if (!evaluate) {
        res.model = std::move(model);
        return res;
    }
    RegionTrainResult eval = evaluate_region_model(model, inst);
    eval.epoch_losses = std::move(res.epoch_losses);
    eval.audit = std::move(res.audit);
    eval.missing_embeddings += res.missing_embeddings;
    return eval;
}

}  // namespace

RegionTrainResult train_region_regressor(const RegionTaskInstance& inst, const nn::TrainConfig& cfg, bool evaluate) {
    return train_region(inst, cfg, false, evaluate);
}

RegionTrainResult train_intensity_model(const RegionTaskInstance& inst, const nn::TrainConfig& cfg, bool evaluate) {
    return train_region(inst, cfg, true, evaluate);
}

RegionTrainResult evaluate_region_model(std::shared_ptr<RegionModel> model, const RegionTaskInstance& inst) {
    if (static_cast<std::size_t>(inst.embeddings.dim) != model->in_dim) {
        fail(Errc::DimensionMismatch, "embedding width " + std::to_string(inst.embeddings.dim) + " differs from model input " +
                                          std::to_string(model->in_dim));
    }
    RegionTrainResult res;
    const RegionSide test = region_side(inst, inst.manifest.test, res.missing_embeddings);
    if (test.cells.empty()) fail(Errc::EmptySplit, "no test cells");
    res.test_cells = test.cells;
    res.test_targets = test.targets;
    res.test_predictions = model->predict(test.rows);
    res.report = region_report(model->sigmoid_head, res.test_targets, res.test_predictions);
    res.model = std::move(model);
    return res;
}

// ---------------------------------------------------------------- sequence models

nlohmann::ordered_json to_json(const SequenceModelOptions& o) {
    return nlohmann::ordered_json{{"hidden", o.hidden}, {"layers", o.layers}, {"heads", o.heads}, {"causal", o.causal}, {"ks", o.ks}};
}

SequenceModelOptions sequence_options_from_json(const nlohmann::ordered_json& j) {
    SequenceModelOptions o;
    try {
        if (j.contains("hidden")) o.hidden = j.at("hidden").get<std::size_t>();
        if (j.contains("layers")) o.layers = j.at("layers").get<std::size_t>();
        if (j.contains("heads")) o.heads = j.at("heads").get<std::size_t>();
        if (j.contains("causal")) o.causal = j.at("causal").get<bool>();
        if (j.contains("ks")) o.ks = j.at("ks").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("sequence model options: ") + e.what());
    }
    if (o.hidden == 0 || o.layers == 0) fail(Errc::InvalidConfig, "hidden size and layer count must be positive");
    if (o.ks.empty()) fail(Errc::InvalidConfig, "ks must be non-empty");
    for (int k : o.ks) {
        if (k < 1) fail(Errc::InvalidConfig, "ks must be positive");
    }
    return o;
}

bool SequenceEncoder::encode(CellId c, double* out) const {
    const auto* v = embeddings->find(c);
    if (!v) {
        std::fill(out, out + dim(), 0.0);
        return false;
    }
    features.apply(*v, out);
    return true;
}

TteModel::TteModel(std::size_t in_dim, const SequenceModelOptions& opt, std::uint64_t seed) : options(opt) {
    CounterRng rng(derive_seed(seed, "tte-init"));
    lstm = nn::LstmStack(store, "lstm", in_dim, opt.hidden, opt.layers, rng);
    head = nn::Dense(store, "head", opt.hidden, 1, rng);
    head.bias().value(0, 0) = 1.0;  // start at the mean duration
    features.mean.assign(in_dim, 0.0);
    features.scale.assign(in_dim, 1.0);
}

nlohmann::ordered_json TteModel::describe() const {
    nlohmann::ordered_json d;
    d["model"] = "tte_lstm";
    d["in_dim"] = features.mean.size();
    d["options"] = to_json(options);
    d["duration_scale"] = duration_scale;
    d["features"] = to_json(features);
    return d;
}

HmpModel::HmpModel(std::size_t in_dim, const SequenceModelOptions& opt, std::uint64_t seed) : options(opt) {
    CounterRng rng(derive_seed(seed, "hmp-init"));
    lstm = nn::LstmStack(store, "lstm", in_dim, opt.hidden, opt.layers, rng);
    attention = nn::MultiHeadAttention(store, "attn", opt.hidden, opt.heads, opt.causal, rng);
    head = nn::Dense(store, "head", opt.hidden, DirectionLabel::kCount, rng);
    features.mean.assign(in_dim, 0.0);
    features.scale.assign(in_dim, 1.0);
}

nlohmann::ordered_json HmpModel::describe() const {
    nlohmann::ordered_json d;
    d["model"] = "hmp_lstm_attention";
    d["in_dim"] = features.mean.size();
    d["options"] = to_json(options);
    d["features"] = to_json(features);
    return d;
}

std::shared_ptr<TteModel> tte_model_from_description(const nlohmann::ordered_json& d) {
    try {
        if (d.at("model") != "tte_lstm") fail(Errc::InvalidConfig, "not a TTE model description");
        auto m = std::make_shared<TteModel>(d.at("in_dim").get<std::size_t>(), sequence_options_from_json(d.at("options")), 0);
        m->duration_scale = d.at("duration_scale").get<double>();
        m->features = standardizer_from_json(d.at("features"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("TTE model description: ") + e.what());
    }
}

std::shared_ptr<HmpModel> hmp_model_from_description(const nlohmann::ordered_json& d) {
    try {
        if (d.at("model") != "hmp_lstm_attention") fail(Errc::InvalidConfig, "not an HMP model description");
        auto m = std::make_shared<HmpModel>(d.at("in_dim").get<std::size_t>(), sequence_options_from_json(d.at("options")), 0);
        m->features = standardizer_from_json(d.at("features"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidConfig, std::string("HMP model description: ") + e.what());
    }
}

std::array<double, 6> geo_costs(CellId from, CellId gold) {
    const auto nbrs = neighbors_by_direction(from);
    const GeoPoint g = centroid(gold);
    std::array<double, 6> out{};
    for (std::size_t c = 0; c < nbrs.size(); ++c) out[c] = std::log1p(haversine(centroid(nbrs[c]), g));
    return out;
}

namespace {

struct SequenceSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

SequenceSplit sequence_split(const SequenceTaskInstance& inst) {
    const std::set<std::string> train(inst.manifest.train.begin(), inst.manifest.train.end());
    const std::set<std::string> test(inst.manifest.test.begin(), inst.manifest.test.end());
    SequenceSplit s;
    for (std::size_t i = 0; i < inst.trajectories.size(); ++i) {
        const auto& id = inst.trajectories[i].id;
        if (train.count(id)) s.train.push_back(i);
        else if (test.count(id)) s.test.push_back(i);
    }
    return s;
}

// Standardizer over the distinct cells a set of trajectories touches.
Standardizer fit_sequence_features(const SequenceTaskInstance& inst, const std::vector<std::size_t>& idx, bool include_y) {
    std::set<CellId> cells;
    for (std::size_t i : idx) {
        const auto& t = inst.trajectories[i];
        cells.insert(t.x.begin(), t.x.end());
        if (include_y) cells.insert(t.y.begin(), t.y.end());
    }
    std::vector<std::vector<double>> rows;
    for (CellId c : cells) {
        if (const auto* v = inst.embeddings.find(c)) {
            if (v->size() != static_cast<std::size_t>(inst.embeddings.dim)) fail(Errc::DimensionMismatch, "embedding of " + c.to_string());
            rows.push_back(*v);
        }
    }
    return Standardizer::fit(rows, static_cast<std::size_t>(inst.embeddings.dim));
}

// Encoded model inputs for one sequence, len x dim.
Tensor2 encode_sequence(const SequenceEncoder& enc, std::span<const CellId> cells, std::size_t& missing) {
    Tensor2 out(cells.size(), enc.dim());
    for (std::size_t t = 0; t < cells.size(); ++t) {
        if (!enc.encode(cells[t], out.row(t))) ++missing;
    }
    return out;
}

// Time-major padded batch of encoded sequences.
Tensor2 pack(const std::vector<const Tensor2*>& seqs, std::size_t steps, std::size_t dim) {
    const std::size_t batch = seqs.size();
    Tensor2 xs(steps * batch, dim);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < seqs[b]->rows(); ++t) std::copy(seqs[b]->row(t), seqs[b]->row(t) + dim, xs.row(t * batch + b));
    }
    return xs;
}

std::size_t max_rows(const std::vector<const Tensor2*>& seqs) {
    std::size_t m = 0;
    for (const auto* s : seqs) m = std::max(m, s->rows());
    return m;
}

struct TtePass {
    std::size_t steps = 0;
    nn::LstmStack::Cache cache;
    Tensor2 h, last, z, y;
};

void tte_forward(const TteModel& m, const std::vector<const Tensor2*>& seqs, TtePass& p) {
    const std::size_t batch = seqs.size();
    p.steps = max_rows(seqs);
    p.h = m.lstm.forward(pack(seqs, p.steps, m.features.mean.size()), p.steps, p.cache);
    p.last = Tensor2(batch, m.lstm.hidden());
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t row = (seqs[b]->rows() - 1) * batch + b;
        std::copy(p.h.row(row), p.h.row(row) + p.last.cols(), p.last.row(b));
    }
    p.z = m.head.forward(p.last);
    p.y = nn::relu(p.z);
}

void tte_backward(const TteModel& m, const std::vector<const Tensor2*>& seqs, const TtePass& p, const Tensor2& dy) {
    const std::size_t batch = seqs.size();
    const Tensor2 dlast = m.head.backward(p.last, nn::relu_backward(p.z, dy));
    Tensor2 dh(p.h.rows(), p.h.cols());
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t row = (seqs[b]->rows() - 1) * batch + b;
        std::copy(dlast.row(b), dlast.row(b) + dlast.cols(), dh.row(row));
    }
    m.lstm.backward(p.cache, dh);
}

void check_sequences(const SequenceTaskInstance& inst, SequenceTask task) {
    if (inst.task != task) fail(Errc::InvalidConfig, "instance is not a " + to_string(task) + " task");
    if (inst.embeddings.dim <= 0) fail(Errc::DimensionMismatch, "embedding matrix has no dimensions");
    for (const auto& t : inst.trajectories) {
        if (t.x.empty()) fail(Errc::EmptySequence, "trajectory " + t.id + " has an empty input sequence");
    }
    if (task == SequenceTask::tte) {
        if (inst.durations.size() != inst.trajectories.size()) fail(Errc::LengthMismatch, "durations do not align with trajectories");
        for (std::size_t i = 0; i < inst.durations.size(); ++i) {
            if (!(inst.durations[i] > 0.0)) fail(Errc::NonPositiveDuration, "trajectory " + inst.trajectories[i].id);
        }
    }
}

}  // namespace

SequenceTrainResult train_tte(const SequenceTaskInstance& inst, const nn::TrainConfig& cfg, const SequenceModelOptions& opt,
                              bool evaluate) {
    cfg.validate();
    check_sequences(inst, SequenceTask::tte);
    const SequenceSplit split = sequence_split(inst);
    if (split.train.empty()) fail(Errc::EmptyTrainSet, "no training trajectories");

    SequenceTrainResult res;
    auto model = std::make_shared<TteModel>(static_cast<std::size_t>(inst.embeddings.dim), opt, cfg.seed);
    model->features = fit_sequence_features(inst, split.train, false);
    double mean = 0.0;
    for (std::size_t i : split.train) {
        mean += inst.durations[i];
        res.audit.fit_ids.insert(inst.trajectories[i].id);
    }
    model->duration_scale = mean / static_cast<double>(split.train.size());

    const SequenceEncoder enc{&inst.embeddings, model->features};
    std::vector<Tensor2> inputs;
    std::vector<std::size_t> lengths;
    for (std::size_t i : split.train) {
        inputs.push_back(encode_sequence(enc, inst.trajectories[i].x, res.missing_embeddings));
        lengths.push_back(inputs.back().rows());
    }

    CounterRng batch_rng(derive_seed(cfg.seed, "tte-batches"));
    const nn::AdamConfig adam = adam_for(cfg);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& batch : length_bucketed_batches(lengths, static_cast<std::size_t>(cfg.batch_size), batch_rng)) {
            std::vector<const Tensor2*> seqs;
            Tensor2 target(batch.size(), 1);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                seqs.push_back(&inputs[batch[b]]);
                target(b, 0) = inst.durations[split.train[batch[b]]] / model->duration_scale;
            }
            TtePass p;
            tte_forward(*model, seqs, p);
            const auto loss = regression_loss(cfg.loss, p.y, target);
            tte_backward(*model, seqs, p, loss.grad);
            nn::adam_step(model->store, adam);
            total += loss.value * static_cast<double>(batch.size());
        }
        res.epoch_losses.push_back(total / static_cast<double>(split.train.size()));
    }

    if (!evaluate) {
        res.tte = std::move(model);
        return res;
    }
    SequenceTrainResult eval = evaluate_tte(model, inst);
    eval.epoch_losses = std::move(res.epoch_losses);
    eval.audit = std::move(res.audit);
    eval.missing_embeddings += res.missing_embeddings;
    return eval;
}

SequenceTrainResult evaluate_tte(std::shared_ptr<TteModel> model, const SequenceTaskInstance& inst) {
    check_sequences(inst, SequenceTask::tte);
    const SequenceSplit split = sequence_split(inst);
    if (split.test.empty()) fail(Errc::EmptySplit, "no test trajectories");
    SequenceTrainResult res;
    const SequenceEncoder enc{&inst.embeddings, model->features};
    std::vector<Tensor2> inputs;
    std::vector<std::size_t> lengths;
    for (std::size_t i : split.test) {
        inputs.push_back(encode_sequence(enc, inst.trajectories[i].x, res.missing_embeddings));
        lengths.push_back(inputs.back().rows());
    }
    res.test_predictions.assign(split.test.size(), 0.0);
    // sorted-by-length batches keep padding small; each output depends only on its own sequence
    std::vector<std::size_t> order(split.test.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (std::size_t s = 0; s < order.size(); s += 32) {
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(s),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + 32)));
        std::vector<const Tensor2*> seqs;
        for (std::size_t b : batch) seqs.push_back(&inputs[b]);
        TtePass p;
        tte_forward(*model, seqs, p);
        for (std::size_t b = 0; b < batch.size(); ++b) res.test_predictions[batch[b]] = p.y(b, 0) * model->duration_scale;
    }
    for (std::size_t i : split.test) res.test_targets.push_back(inst.durations[i]);
    res.report = regression_metrics(res.test_targets, res.test_predictions);
    res.report.task = "tte";
    res.tte = std::move(model);
    return res;
}

namespace {

struct HmpSample {
    Tensor2 inputs;            ///< L x dim, cells s_0 .. s_{L-1}
    std::vector<int> labels;   ///< direction s_t -> s_{t+1}
    std::vector<std::array<double, 6>> costs;
};

HmpSample hmp_sample(const SequenceEncoder& enc, const SegmentedTrajectory& t, std::size_t& missing) {
    std::vector<CellId> cells = t.x;
    cells.insert(cells.end(), t.y.begin(), t.y.end());
    if (cells.size() < 2) fail(Errc::EmptySequence, "trajectory " + t.id + " has no step to predict");
    HmpSample s;
    s.inputs = encode_sequence(enc, std::span(cells).first(cells.size() - 1), missing);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
        s.labels.push_back(direction_between(cells[i], cells[i + 1]).value());
        s.costs.push_back(geo_costs(cells[i], cells[i + 1]));
    }
    return s;
}

struct HmpPass {
    std::size_t steps = 0;
    nn::LstmStack::Cache lstm_cache;
    nn::MultiHeadAttention::Cache attn_cache;
    Tensor2 h, a, logits;
};

}  // namespace

SequenceTrainResult train_hmp(const SequenceTaskInstance& inst, const nn::TrainConfig& cfg, const SequenceModelOptions& opt,
                              bool evaluate) {
    cfg.validate();
    check_sequences(inst, SequenceTask::hmp);
    double w = cfg.geo_weight;
    if (cfg.loss == nn::LossKind::cross_entropy) w = 0.0;
    else if (cfg.loss != nn::LossKind::hybrid_hmp) fail(Errc::InvalidConfig, "HMP needs cross_entropy or hybrid_hmp loss");
    const SequenceSplit split = sequence_split(inst);
    if (split.train.empty()) fail(Errc::EmptyTrainSet, "no training trajectories");

    SequenceTrainResult res;
    auto model = std::make_shared<HmpModel>(static_cast<std::size_t>(inst.embeddings.dim), opt, cfg.seed);
    model->features = fit_sequence_features(inst, split.train, true);
    for (std::size_t i : split.train) res.audit.fit_ids.insert(inst.trajectories[i].id);

    const SequenceEncoder enc{&inst.embeddings, model->features};
    std::vector<HmpSample> samples;
    std::vector<std::size_t> lengths;
    for (std::size_t i : split.train) {
        samples.push_back(hmp_sample(enc, inst.trajectories[i], res.missing_embeddings));
        lengths.push_back(samples.back().labels.size());
    }

    CounterRng batch_rng(derive_seed(cfg.seed, "hmp-batches"));
    const nn::AdamConfig adam = adam_for(cfg);
    const std::size_t dim = model->features.mean.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0, weight = 0.0;
        for (const auto& batch : length_bucketed_batches(lengths, static_cast<std::size_t>(cfg.batch_size), batch_rng)) {
            std::vector<const Tensor2*> seqs;
            for (std::size_t b : batch) seqs.push_back(&samples[b].inputs);
            const std::size_t bsz = batch.size();
            HmpPass p;
            p.steps = max_rows(seqs);
            std::vector<int> labels(p.steps * bsz, 0);
            std::vector<double> mask(p.steps * bsz, 0.0);
            Tensor2 cost(p.steps * bsz, DirectionLabel::kCount);
            for (std::size_t b = 0; b < bsz; ++b) {
                const auto& s = samples[batch[b]];
                for (std::size_t t = 0; t < s.labels.size(); ++t) {
                    const std::size_t row = t * bsz + b;
                    labels[row] = s.labels[t];
                    mask[row] = 1.0;
                    std::copy(s.costs[t].begin(), s.costs[t].end(), cost.row(row));
                }
            }
            p.h = model->lstm.forward(pack(seqs, p.steps, dim), p.steps, p.lstm_cache);
            p.a = model->attention.forward(p.h, p.h, p.h, p.steps, p.attn_cache);
            p.logits = model->head.forward(p.a);
            const auto loss = nn::hybrid_loss(p.logits, labels, cost, w, mask);
            const Tensor2 da = model->head.backward(p.a, loss.grad);
            const auto g = model->attention.backward(p.attn_cache, da);
            Tensor2 dh = g.dq;
            for (std::size_t i = 0; i < dh.size(); ++i) dh.data()[i] += g.dk.data()[i] + g.dv.data()[i];
            model->lstm.backward(p.lstm_cache, dh);
            nn::adam_step(model->store, adam);
            double valid = 0.0;
            for (double m : mask) valid += m;
            total += loss.value * valid;
            weight += valid;
        }
        res.epoch_losses.push_back(total / weight);
    }

    if (!evaluate) {
        res.hmp = std::move(model);
        return res;
    }
    SequenceTrainResult eval = evaluate_hmp(model, inst);
    eval.epoch_losses = std::move(res.epoch_losses);
    eval.audit = std::move(res.audit);
    eval.missing_embeddings += res.missing_embeddings;
    return eval;
}

std::vector<CellId> hmp_rollout(const HmpModel& model, const EmbeddingMatrix& embeddings, const std::vector<CellId>& x,
                                std::size_t steps, std::size_t* missing) {
    if (x.empty()) fail(Errc::EmptySequence, "rollout needs at least one input cell");
    const SequenceEncoder enc{&embeddings, model.features};
    auto states = model.lstm.zero_state(1);
    nn::MultiHeadAttention::Incremental attn;
    Tensor2 in(1, enc.dim());
    std::size_t miss = 0;
    std::vector<CellId> out;
    Tensor2 logits;
    auto advance = [&](CellId c) {
        if (!enc.encode(c, in.row(0))) ++miss;
        const Tensor2 h = model.lstm.step(in, states);
        logits = model.head.forward(model.attention.step(h, attn));
    };
    for (CellId c : x) advance(c);
    CellId cur = x.back();
    for (std::size_t s = 0; s < steps; ++s) {
        const double* z = logits.row(0);
        const auto best = static_cast<int>(std::max_element(z, z + DirectionLabel::kCount) - z);
        cur = neighbor_in_direction(cur, DirectionLabel(best));
        out.push_back(cur);
        if (s + 1 < steps) advance(cur);
    }
    if (missing) *missing += miss;
    return out;
}

SequenceTrainResult evaluate_hmp(std::shared_ptr<HmpModel> model, const SequenceTaskInstance& inst) {
    check_sequences(inst, SequenceTask::hmp);
    const SequenceSplit split = sequence_split(inst);
    if (split.test.empty()) fail(Errc::EmptySplit, "no test trajectories");
    SequenceTrainResult res;
    res.rollouts.resize(split.test.size());
    std::vector<std::size_t> missing(split.test.size(), 0);
    parallel_for(split.test.size(), Exec::parallel, [&](std::size_t i) {
        const auto& t = inst.trajectories[split.test[i]];
        if (t.y.empty()) fail(Errc::EmptySequence, "trajectory " + t.id + " has no target cells");
        res.rollouts[i] = {t.id, hmp_rollout(*model, inst.embeddings, t.x, t.y.size(), &missing[i]), t.y};
    }, 1);
    std::vector<SequencePair> pairs;
    for (std::size_t i = 0; i < res.rollouts.size(); ++i) {
        pairs.push_back({res.rollouts[i].predicted, res.rollouts[i].gold});
        res.missing_embeddings += missing[i];
    }
    res.horizon = evaluate_at_k(pairs, model->options.ks);
    for (auto& r : res.horizon) r.task = "hmp";
    res.report = res.horizon.front();
    res.hmp = std::move(model);
    return res;
}

}  // namespace obsr
