#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbgi/dataset.hpp"
#include "dbgi/metrics.hpp"
#include "dbgi/model.hpp"
#include "dbgi/params.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

struct TrainConfig {
    double lr = 1e-4;
    double momentum = 0.9;
    double lambda_l2 = 0.01;
    int max_epochs = 300;
    int plateau_patience = 10;
    double lr_decay_factor = 10.0;
    std::uint64_t seed = 0;
    int batch_size = 8;
    // divergence guard; ablation runs disable it so divergence stays observable
    double clip_norm = 100.0;
    bool clip_enabled = true;
    // L2 covers weight matrices only by default (not biases or BN scale/shift)
    bool l2_all_parameters = false;

    void validate() const;
};

struct LossStats {
    double nll_sum = 0.0;   // data term of the objective
    int tokens = 0;
    int floor_hits = 0;     // true-label probabilities at/below the log floor
};

// Cross-entropy over the per-step distributions plus lambda * sum of squared
// decaying parameters. Probabilities are floored at 1e-12 inside the log;
// floor hits are reported through stats as a numeric warning.
Tensor sequence_loss(const std::vector<Tensor>& step_probabilities, const std::vector<int>& labels,
                     const ParameterStore& params, double lambda, bool l2_all_parameters = false,
                     LossStats* stats = nullptr);

// Classical momentum: velocity = momentum * velocity + grad,
// parameter -= lr * velocity. Missing grads count as zero.
class SgdMomentum {
public:
    explicit SgdMomentum(const ParameterStore& store);

    void step(ParameterStore& store, double lr, double momentum);
    const std::vector<double>& velocity(std::size_t trainable_index) const;

private:
    std::vector<std::vector<double>> velocities_;
};

// Scales all trainable grads so their global norm is at most max_norm.
// Returns the pre-clip norm.
double clip_gradients(ParameterStore& store, double max_norm);

// Replays a validation-metric history (higher is better) against the
// plateau rule: after `patience` consecutive epochs without a new strict
// best, divide lr by decay_factor; the window restarts after each decay and
// after each new best. Ties do not reset the window.
double plateau_lr(const std::vector<double>& history, double initial_lr, int patience,
                  double decay_factor);

// Greedy (or beam, when beam_width > 0) decode of every sample against its
// reference body tokens.
EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, int max_len,
                    int beam_width = 0);

struct EpochRow {
    int epoch = 0;       // 1-based
    double loss = 0.0;   // mean per-token NLL over the epoch
    double lr = 0.0;
    EvalReport eval;
};

struct TrainResult {
    std::vector<EpochRow> history;
    bool diverged = false;
    int epochs_to_loss_half = -1;  // first epoch with loss <= loss_target, -1 if never
    int best_epoch = -1;
    double best_exprate = -1.0;
    int floor_hits = 0;
};

struct TrainOptions {
    TrainConfig config;
    int max_decode_len = 40;
    int beam_width = 0;            // 0 = greedy
    std::string out_dir;           // empty: keep everything in memory
    bool ablation_mode = false;    // no clipping; divergence is recorded, not thrown
    double stop_at_exprate = -1.0; // early stop once validation reaches this
    double loss_target = 0.5;      // threshold for epochs_to_loss_half
    std::string warm_start;        // checkpoint loaded before training (missing tensors stay)
};

// Full teacher-forced training loop: per-epoch seeded shuffle, mini-batch
// gradient accumulation, plateau schedule on validation exprate, best/final
// checkpoints plus metrics.csv and report.json under out_dir.
TrainResult train_model(Model& model, const std::vector<Sample>& train,
                        const std::vector<Sample>& val, const TrainOptions& options);

// ---- ablation harness ----

struct AblationVariant {
    std::string label;
    ModelConfig model;
};

struct AblationRow {
    std::string label;
    bool diverged = false;
    int epochs_to_loss_half = -1;
    EvalReport eval;
};

// Trains each variant on the same data with the same seed and reports one
// row per variant; divergence (non-finite objective or > 1e3) is an outcome.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::vector<Sample>& train,
                                      const std::vector<Sample>& val, std::int64_t vocab_size,
                                      const TrainOptions& options);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace dbgi
