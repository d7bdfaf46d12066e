#include "gengnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gengnn/errors.hpp"
#include "gengnn/random.hpp"

namespace gengnn {

using nlohmann::json;

namespace {

constexpr std::uint64_t kValStream = 0x76616cULL;

}  // namespace

Trainer::Trainer(Denoiser& model, const TransitionFamily& fam, const GraphSet& train, const GraphSet* val, TrainOptions opt)
    : model_(model), fam_(fam), train_(train), val_(val), opt_(opt), adam_(opt.adam) {
    if (train_.empty()) throw ContractError("training set is empty");
    if (opt_.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (opt_.epochs < 0) throw InvalidArgument("epochs must be >= 0");
    const DenoiserConfig& c = model_.config();
    for (const GraphSet* s : {&train_, val_}) {
        if (!s) continue;
        for (const Graph& g : s->graphs)
            if (g.node_classes() != c.node_classes || g.edge_classes() != c.edge_classes)
                throw CompatibilityError("dataset graph has " + std::to_string(g.node_classes()) + "/" + std::to_string(g.edge_classes()) +
                                         " node/edge classes, model expects " + std::to_string(c.node_classes) + "/" +
                                         std::to_string(c.edge_classes));
    }
    if (!(opt_.ema >= 0.0 && opt_.ema < 1.0)) throw InvalidArgument("ema decay must lie in [0,1)");
    for (const auto& [name, t] : model_.params().items()) best_values_.emplace_back(t.data().begin(), t.data().end());
    if (opt_.ema > 0.0) ema_values_ = best_values_;
}

void Trainer::swap_ema() {
    std::size_t k = 0;
    for (auto& [name, t] : model_.params().items()) {
        auto w = t.mutable_data();
        std::swap_ranges(w.begin(), w.end(), ema_values_[k++].begin());
    }
}

bool Trainer::finished() const { return epoch_ >= opt_.epochs || (opt_.max_steps > 0 && adam_.steps() >= opt_.max_steps); }

EpochRecord Trainer::run_epoch() {
    Rng rng(derive_seed(opt_.seed, static_cast<std::uint64_t>(epoch_ + 1)));
    std::vector<std::size_t> idx(train_.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return train_.graphs[a].n() < train_.graphs[b].n(); });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t k = 0; k < idx.size();) {
        std::vector<std::size_t> b;
        const int n = train_.graphs[idx[k]].n();
        while (k < idx.size() && train_.graphs[idx[k]].n() == n && static_cast<int>(b.size()) < opt_.batch_size) b.push_back(idx[k++]);
        batches.push_back(std::move(b));
    }
    rng.shuffle(batches.begin(), batches.end());

    EpochRecord rec;
    rec.epoch = epoch_ + 1;
    double loss_sum = 0.0, node_sum = 0.0, edge_sum = 0.0;
    std::size_t seen = 0;
    const int T = fam_.schedule.steps();
    if (opt_.cosine_lr && opt_.epochs > 0) {
        const double lo = opt_.lr_min_ratio * opt_.adam.lr;
        adam_.set_lr(lo + 0.5 * (opt_.adam.lr - lo) * (1.0 + std::cos(M_PI * epoch_ / opt_.epochs)));
    }
    for (const auto& batch : batches) {
        if (opt_.max_steps > 0 && adam_.steps() >= opt_.max_steps) break;
        std::vector<Graph> noisy;
        std::vector<double> levels;
        std::vector<const Graph*> clean;
        for (std::size_t i : batch) {
            const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
            noisy.push_back(forward_noise(train_.graphs[i], t, fam_, rng));
            levels.push_back(static_cast<double>(t) / T);
            clean.push_back(&train_.graphs[i]);
        }
        std::vector<const Graph*> ptrs;
        for (const Graph& g : noisy) ptrs.push_back(&g);
        const DenoiserInput in = model_.prepare(ptrs, levels);

        model_.params().zero_grad();
        Tape tape;
        const DenoiserOutput out = model_.forward(in, true, &rng);
        LossTerms loss;
        try {
            loss = training_loss(out.node_logits, out.edge_logits, clean, opt_.lambda_edge);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(rec.epoch) + ", step " + std::to_string(adam_.steps() + 1) +
                               ": " + e.what());
        }
        const double value = loss.total.item();
        if (!std::isfinite(value))
            throw NumericError("training diverged at epoch " + std::to_string(rec.epoch) + ", step " + std::to_string(adam_.steps() + 1) +
                               ": loss is " + std::to_string(value));
        tape.backward(loss.total);
        adam_.step(model_.params());
        if (opt_.ema > 0.0) {
            // Short warmup so early averages are not dominated by the initialization.
            const double t = static_cast<double>(adam_.steps());
            const double d = std::min(opt_.ema, (1.0 + t) / (10.0 + t));
            std::size_t k = 0;
            for (const auto& [name, p] : model_.params().items()) {
                auto& e = ema_values_[k++];
                const auto v = p.data();
                for (std::size_t i = 0; i < e.size(); ++i) e[i] = d * e[i] + (1.0 - d) * v[i];
            }
        }
        const double w = static_cast<double>(batch.size());
        loss_sum += value * w;
        node_sum += loss.node_ce * w;
        edge_sum += loss.edge_ce * w;
        seen += batch.size();
    }
    ++epoch_;
    rec.steps = adam_.steps();
    if (seen > 0) {
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.node_ce = node_sum / static_cast<double>(seen);
        rec.edge_ce = edge_sum / static_cast<double>(seen);
    }
    if (opt_.ema > 0.0) swap_ema();
    const double score = val_ || opt_.ema > 0.0 ? validation_loss() : rec.train_loss;
    if (val_) rec.val_loss = score;
    if (score < best_score_) {
        best_score_ = score;
        best_epoch_ = rec.epoch;
        rec.best = true;
        std::size_t k = 0;
        for (const auto& [name, t] : model_.params().items()) best_values_[k++].assign(t.data().begin(), t.data().end());
    }
    if (opt_.ema > 0.0) swap_ema();
    return rec;
}

std::vector<EpochRecord> Trainer::run(const std::function<void(const EpochRecord&)>& on_epoch) {
    std::vector<EpochRecord> out;
    while (!finished()) {
        out.push_back(run_epoch());
        if (on_epoch) on_epoch(out.back());
    }
    return out;
}

double Trainer::validation_loss() const {
    const GraphSet& set = val_ ? *val_ : train_;
    const int T = fam_.schedule.steps();
    double total = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        Rng rng(derive_seed(opt_.seed ^ kValStream, i));
        const Graph& g0 = set.graphs[i];
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        const Graph noisy = forward_noise(g0, t, fam_, rng);
        const DenoiserOutput out = model_.forward(model_.prepare({&noisy}, {static_cast<double>(t) / T}));
        total += training_loss(out.node_logits, out.edge_logits, {&g0}, opt_.lambda_edge).total.item();
    }
    return set.empty() ? 0.0 : total / static_cast<double>(set.size());
}

json Trainer::best_params_json() const {
    json out = json::object();
    std::size_t k = 0;
    for (const auto& [name, t] : model_.params().items()) {
        out[name] = {{"shape", t.shape()}, {"values", best_values_[k++]}};
    }
    return out;
}

json Trainer::state() const {
    return json{{"epoch", epoch_},
                {"adam", adam_.to_json()},
                {"best_score", std::isfinite(best_score_) ? json(best_score_) : json(nullptr)},
                {"best_epoch", best_epoch_},
                {"best_params", best_params_json()},
                {"ema", ema_values_}};
}

void Trainer::load_state(const json& j) {
    epoch_ = j.at("epoch").get<int>();
    adam_.load_json(j.at("adam"));
    best_score_ = j.at("best_score").is_null() ? std::numeric_limits<double>::infinity() : j.at("best_score").get<double>();
    best_epoch_ = j.at("best_epoch").get<int>();
    const json& bp = j.at("best_params");
    std::size_t k = 0;
    for (const auto& [name, t] : model_.params().items()) {
        if (!bp.contains(name)) throw CompatibilityError("trainer state lacks best values for '" + name + "'");
        best_values_[k] = bp.at(name).at("values").get<std::vector<double>>();
        if (best_values_[k].size() != t.numel()) throw CompatibilityError("trainer state has wrong size for '" + name + "'");
        ++k;
    }
    if (opt_.ema > 0.0) {
        if (!j.contains("ema") || j.at("ema").size() != ema_values_.size())
            throw CompatibilityError("trainer state lacks the weight average this run needs");
        ema_values_ = j.at("ema").get<std::vector<std::vector<double>>>();
    }
}

}  // namespace gengnn
