#include "dbgi/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dbgi/rng.hpp"

namespace dbgi {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ContractViolation("train: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ContractViolation("train: momentum must be in [0, 1)");
    if (lambda_l2 < 0.0) throw ContractViolation("train: lambda_l2 must be nonnegative");
    if (max_epochs < 1) throw ContractViolation("train: max_epochs must be >= 1");
    if (plateau_patience < 1) throw ContractViolation("train: plateau_patience must be >= 1");
    if (lr_decay_factor <= 1.0) throw ContractViolation("train: lr_decay_factor must be > 1");
    if (batch_size < 1) throw ContractViolation("train: batch_size must be >= 1");
    if (clip_norm <= 0.0) throw ContractViolation("train: clip_norm must be positive");
}

namespace {

constexpr double kLogFloor = 1e-12;

std::string format_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.10g", v);
    return buffer;
}

}  // namespace

Tensor sequence_loss(const std::vector<Tensor>& step_probabilities, const std::vector<int>& labels,
                     const ParameterStore& params, double lambda, bool l2_all_parameters,
                     LossStats* stats) {
    if (step_probabilities.size() != labels.size())
        throw ContractViolation("loss: " + std::to_string(step_probabilities.size()) +
                                " probability vectors for " + std::to_string(labels.size()) +
                                " labels");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const Tensor& probs = step_probabilities[t];
        if (labels[t] < 0 || labels[t] >= probs.size())
            throw ContractViolation("loss: label id out of vocabulary range");
        Tensor p = pick(probs, labels[t]);
        if (stats && p.value() <= kLogFloor) ++stats->floor_hits;
        total = add(total, neg(log(add_const(p, kLogFloor))));
    }
    if (stats) {
        stats->nll_sum += total.value();
        stats->tokens += static_cast<int>(labels.size());
    }
    if (lambda > 0.0) {
        Tensor sq = Tensor::scalar(0.0);
        for (const Parameter& p : params.entries()) {
            if (!p.trainable) continue;
            if (!(p.decay || l2_all_parameters)) continue;
            sq = add(sq, sum(mul(p.tensor, p.tensor)));
        }
        total = add(total, scale(sq, lambda));
    }
    return total;
}

SgdMomentum::SgdMomentum(const ParameterStore& store) {
    for (const Parameter& p : store.entries())
        if (p.trainable)
            velocities_.emplace_back(static_cast<std::size_t>(p.tensor.size()), 0.0);
}

void SgdMomentum::step(ParameterStore& store, double lr, double momentum) {
    std::size_t slot = 0;
    for (Parameter& p : store.entries()) {
        if (!p.trainable) continue;
        auto& velocity = velocities_[slot++];
        const bool has_grad = p.tensor.has_grad();
        auto& values = p.tensor.data();
        for (std::size_t i = 0; i < velocity.size(); ++i) {
            const double g = has_grad ? p.tensor.grad()[i] : 0.0;
            velocity[i] = momentum * velocity[i] + g;
            values[i] -= lr * velocity[i];
        }
    }
}

const std::vector<double>& SgdMomentum::velocity(std::size_t trainable_index) const {
    return velocities_.at(trainable_index);
}

double clip_gradients(ParameterStore& store, double max_norm) {
    double sq = 0.0;
    for (const Parameter& p : store.entries())
        if (p.trainable && p.tensor.has_grad())
            for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (Parameter& p : store.entries())
            if (p.trainable && p.tensor.has_grad())
                for (double& g : p.tensor.grad_mut()) g *= factor;
    }
    return norm;
}

double plateau_lr(const std::vector<double>& history, double initial_lr, int patience,
                  double decay_factor) {
    if (history.empty()) throw ContractViolation("scheduler: empty history");
    double lr = initial_lr;
    double best = history.front();
    int stalled = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] > best) {
            best = history[i];
            stalled = 0;
            continue;
        }
        ++stalled;
        if (stalled >= patience) {
            lr /= decay_factor;
            stalled = 0;
        }
    }
    return lr;
}

EvalReport evaluate(const Model& model, const std::vector<Sample>& samples, int max_len,
                    int beam_width) {
    if (samples.empty()) throw ContractViolation("evaluate: empty dataset");
    std::vector<std::vector<int>> references, hypotheses;
    for (const Sample& s : samples) {
        std::vector<int> reference = s.targets();
        reference.pop_back();  // drop the end marker
        references.push_back(std::move(reference));
        const Tensor image = reshape(s.image, {1, 1, s.image.dim(1), s.image.dim(2)});
        const DecodeResult decoded = beam_width > 0
                                         ? model.decode_beam(image, beam_width, max_len)
                                         : model.decode_greedy(image, max_len);
        hypotheses.push_back(decoded.tokens);
    }
    return score_pairs(references, hypotheses);
}

TrainResult train_model(Model& model, const std::vector<Sample>& train,
                        const std::vector<Sample>& val, const TrainOptions& options) {
    options.config.validate();
    if (train.empty()) throw ContractViolation("train: empty training set");
    if (val.empty()) throw ContractViolation("train: empty validation set");
    const TrainConfig& cfg = options.config;

    if (!options.warm_start.empty()) {
        load_checkpoint(model.store, options.warm_start, /*allow_missing=*/true);
        // a plain-GRU checkpoint warm-starts a gated-input model; the fresh
        // auxiliary projections start from zero
        if (model.config().decoder.cell == CellKind::gi_gru)
            for (Parameter& p : model.store.entries())
                if (p.name.ends_with(".w_aux"))
                    std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0);
    }

    const bool to_disk = !options.out_dir.empty();
    if (to_disk) fs::create_directories(options.out_dir);

    SgdMomentum optimizer(model.store);
    TrainResult result;
    std::vector<double> exprate_history;
    double lr = cfg.lr;
    double lambda_sq_value = 0.0;

    std::string csv = "epoch,loss,lr,exprate,wer,le1,le2,le3\n";

    for (int epoch = 1; epoch <= cfg.max_epochs && !result.diverged; ++epoch) {
        // seeded epoch shuffle
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::derive(cfg.seed, 0x65706f00ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);

        model.set_training(true);
        LossStats epoch_stats;
        for (std::size_t start = 0; start < order.size() && !result.diverged;
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            model.store.zero_grad();

            Tensor batch_nll;
            LossStats batch_stats;
            for (std::size_t k = start; k < stop; ++k) {
                const Sample& s = train[order[k]];
                const Tensor image = reshape(s.image, {1, 1, s.image.dim(1), s.image.dim(2)});
                DecodeResult forced = model.decode_teacher_forced(image, s.targets());
                Tensor nll = sequence_loss(forced.step_probabilities, s.targets(), model.store, 0.0,
                                           false, &batch_stats);
                batch_nll = batch_nll.defined() ? add(batch_nll, nll) : nll;
            }

            Tensor objective = scale(batch_nll, 1.0 / static_cast<double>(stop - start));
            if (cfg.lambda_l2 > 0.0) {
                Tensor sq = Tensor::scalar(0.0);
                for (const Parameter& p : model.store.entries()) {
                    if (!p.trainable) continue;
                    if (!(p.decay || cfg.l2_all_parameters)) continue;
                    sq = add(sq, sum(mul(p.tensor, p.tensor)));
                }
                lambda_sq_value = cfg.lambda_l2 * sq.value();
                objective = add(objective, scale(sq, cfg.lambda_l2));
            }

            // Eq.-13-style per-sample objective drives the divergence check
            const double mean_sample_loss =
                batch_stats.nll_sum / static_cast<double>(stop - start) + lambda_sq_value;
            if (!std::isfinite(mean_sample_loss) || mean_sample_loss > 1e3) {
                result.diverged = true;
                break;
            }

            backward(objective);
            if (cfg.clip_enabled && !options.ablation_mode) clip_gradients(model.store, cfg.clip_norm);
            optimizer.step(model.store, lr, cfg.momentum);

            epoch_stats.nll_sum += batch_stats.nll_sum;
            epoch_stats.tokens += batch_stats.tokens;
            epoch_stats.floor_hits += batch_stats.floor_hits;
        }
        result.floor_hits += epoch_stats.floor_hits;
        if (result.diverged) break;

        EpochRow row;
        row.epoch = epoch;
        row.loss = epoch_stats.tokens > 0 ? epoch_stats.nll_sum / epoch_stats.tokens : 0.0;
        if (!std::isfinite(row.loss)) {
            result.diverged = true;
            break;
        }
        if (result.epochs_to_loss_half < 0 && row.loss <= options.loss_target)
            result.epochs_to_loss_half = epoch;

        model.set_training(false);
        row.eval = evaluate(model, val, options.max_decode_len, options.beam_width);
        row.lr = lr;
        exprate_history.push_back(row.eval.exprate);
        lr = plateau_lr(exprate_history, cfg.lr, cfg.plateau_patience, cfg.lr_decay_factor);

        if (row.eval.exprate > result.best_exprate) {
            result.best_exprate = row.eval.exprate;
            result.best_epoch = epoch;
            if (to_disk) save_checkpoint(model.store, (fs::path(options.out_dir) / "best.ckpt").string());
        }

        csv += std::to_string(row.epoch) + "," + format_double(row.loss) + "," +
               format_double(row.lr) + "," + format_double(row.eval.exprate) + "," +
               format_double(row.eval.wer) + "," + format_double(row.eval.le1) + "," +
               format_double(row.eval.le2) + "," + format_double(row.eval.le3) + "\n";
        result.history.push_back(std::move(row));

        if (options.stop_at_exprate >= 0.0 &&
            result.history.back().eval.exprate >= options.stop_at_exprate)
            break;
    }

    if (to_disk) {
        save_checkpoint(model.store, (fs::path(options.out_dir) / "final.ckpt").string());
        std::ofstream csv_file(fs::path(options.out_dir) / "metrics.csv", std::ios::trunc);
        if (!csv_file) throw IoError("cannot write metrics.csv in " + options.out_dir);
        csv_file << csv;

        nlohmann::json report;
        report["seed"] = cfg.seed;
        report["epochs_run"] = result.history.size();
        report["diverged"] = result.diverged;
        report["best_epoch"] = result.best_epoch;
        report["best_exprate"] = result.best_exprate;
        report["epochs_to_loss_target"] = result.epochs_to_loss_half;
        report["loss_target"] = options.loss_target;
        report["floor_hits"] = result.floor_hits;
        if (!result.history.empty()) {
            const EpochRow& last = result.history.back();
            report["final"] = {{"epoch", last.epoch},     {"loss", last.loss},
                               {"lr", last.lr},           {"exprate", last.eval.exprate},
                               {"wer", last.eval.wer},    {"le1", last.eval.le1},
                               {"le2", last.eval.le2},    {"le3", last.eval.le3}};
        }
        std::ofstream report_file(fs::path(options.out_dir) / "report.json", std::ios::trunc);
        if (!report_file) throw IoError("cannot write report.json in " + options.out_dir);
        report_file << report.dump(2) << "\n";
    }
    return result;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::vector<Sample>& train,
                                      const std::vector<Sample>& val, std::int64_t vocab_size,
                                      const TrainOptions& options) {
    std::vector<AblationRow> rows;
    for (const AblationVariant& variant : variants) {
        variant.model.validate();
        Model model(variant.model, vocab_size, Vocabulary::start_id, Vocabulary::end_id,
                    options.config.seed);
        TrainOptions run = options;
        run.ablation_mode = true;
        run.out_dir.clear();
        const TrainResult result = train_model(model, train, val, run);

        AblationRow row;
        row.label = variant.label;
        row.diverged = result.diverged;
        row.epochs_to_loss_half = result.epochs_to_loss_half;
        if (!result.diverged && !result.history.empty()) row.eval = result.history.back().eval;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string csv = "label,status,epochs_to_loss_0.5,exprate,le1,le2,le3,wer\n";
    for (const AblationRow& row : rows) {
        csv += row.label + ",";
        if (row.diverged) {
            csv += "diverged,,,,,,\n";
            continue;
        }
        csv += "ok," +
               (row.epochs_to_loss_half >= 0 ? std::to_string(row.epochs_to_loss_half) : "") + "," +
               format_double(row.eval.exprate) + "," + format_double(row.eval.le1) + "," +
               format_double(row.eval.le2) + "," + format_double(row.eval.le3) + "," +
               format_double(row.eval.wer) + "\n";
    }
    return csv;
}

}  // namespace dbgi
