#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include <json.hpp>

#include "gengnn/denoiser.hpp"
#include "gengnn/diffusion.hpp"
#include "gengnn/params.hpp"

namespace gengnn {

struct TrainOptions {
    int epochs = 1;
    int batch_size = 64;
    AdamConfig adam{};
    double lambda_edge = 5.0;
    std::uint64_t seed = 0;
    long max_steps = 0;  // total optimizer steps across epochs; 0 = unlimited
    // Exponential moving average of the weights; 0 disables. When on, the
    // averaged weights are the ones scored and kept as best.
    double ema = 0.0;
    // Cosine decay of the learning rate from adam.lr to lr_min_ratio * adam.lr
    // over `epochs`.
    bool cosine_lr = false;
    double lr_min_ratio = 0.05;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    long steps = 0; // optimizer steps so far
    double train_loss = 0.0;
    double node_ce = 0.0;
    double edge_ce = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    bool best = false;
};

// Minibatch trainer. Batches hold graphs of equal size; epoch e draws all of its
// randomness from derive_seed(seed, e), so resuming at an epoch boundary replays
// exactly the run that was interrupted.
class Trainer {
public:
    Trainer(Denoiser& model, const TransitionFamily& fam, const GraphSet& train, const GraphSet* val, TrainOptions opt);

    // Throws NumericError if the loss turns non-finite.
    EpochRecord run_epoch();
    std::vector<EpochRecord> run(const std::function<void(const EpochRecord&)>& on_epoch = {});

    int epoch() const { return epoch_; }
    long steps() const { return adam_.steps(); }
    bool finished() const;

    // Mean loss over the validation set (or the training set when none is
    // given) at fixed per-graph noise draws.
    double validation_loss() const;

    double best_score() const { return best_score_; }
    int best_epoch() const { return best_epoch_; }
    nlohmann::json best_params_json() const;

    nlohmann::json state() const;
    void load_state(const nlohmann::json& j);

private:
    Denoiser& model_;
    const TransitionFamily& fam_;
    const GraphSet& train_;
    const GraphSet* val_;
    TrainOptions opt_;
    Adam adam_;
    int epoch_ = 0;
    double best_score_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
    std::vector<std::vector<double>> best_values_;
    std::vector<std::vector<double>> ema_values_;

    void swap_ema();
};

}  // namespace gengnn
