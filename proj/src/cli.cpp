#include "dbgi/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "dbgi/gradcheck.hpp"
#include "dbgi/synthetic.hpp"

namespace dbgi::cli {

namespace fs = std::filesystem;

namespace {

Vocabulary vocabulary_for(const ExperimentConfig& config, const std::vector<Sample>* samples) {
    if (config.data.source == "synthetic") return synthetic_vocabulary();
    // corpus-driven sources: sorted unique lexemes of every label
    std::set<std::string> lexemes;
    for (const Sample& s : *samples)
        for (const std::string& lexeme : split_latex(s.label)) lexemes.insert(lexeme);
    return Vocabulary::from_tokens(std::vector<std::string>(lexemes.begin(), lexemes.end()));
}

struct LoadedData {
    Vocabulary vocab;
    DatasetSplit split;
};

LoadedData load_data(const ExperimentConfig& config) {
    LoadedData out;
    std::vector<Sample> samples;
    if (config.data.source == "synthetic") {
        out.vocab = synthetic_vocabulary();
        SyntheticConfig gen;
        gen.seed = config.seed;
        gen.count = config.data.synthetic_count;
        gen.grammar_depth = config.data.grammar_depth;
        gen.target_height = config.data.target_height;
        gen.stroke_width = config.data.stroke_width;
        samples = generate_synthetic(gen, out.vocab);
    } else if (config.data.source == "inkml") {
        // two passes: labels first to build the vocabulary, then tokenization
        std::vector<Sample> raw = load_inkml_dir(config.data.inkml_dir, Vocabulary::from_tokens({}),
                                                 config.data.target_height, config.data.stroke_width);
        out.vocab = vocabulary_for(config, &raw);
        for (Sample& s : raw) s.tokens = tokenize_latex(s.label, out.vocab).ids;
        samples = std::move(raw);
    } else {
        std::vector<Sample> raw = load_dataset(config.data.cache_dir, Vocabulary::from_tokens({}));
        out.vocab = vocabulary_for(config, &raw);
        for (Sample& s : raw) s.tokens = tokenize_latex(s.label, out.vocab).ids;
        samples = std::move(raw);
    }
    out.split = split_dataset(std::move(samples), config.data.val_fraction, config.seed);
    return out;
}

Model build_model(const ExperimentConfig& config, const Vocabulary& vocab) {
    return Model(config.model, vocab.size(), Vocabulary::start_id, Vocabulary::end_id, config.seed);
}

TrainOptions train_options(const ExperimentConfig& config) {
    TrainOptions options;
    options.config = config.train;
    options.config.seed = config.seed;
    options.max_decode_len = config.max_decode_len;
    options.beam_width = config.beam_width;
    options.warm_start = config.warm_start;
    return options;
}

void write_eval_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j = {{"exprate", report.exprate}, {"wer", report.wer},     {"le1", report.le1},
                        {"le2", report.le2},         {"le3", report.le3},
                        {"distances", report.distances}};
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write " + path);
    os << j.dump(2) << "\n";
}

}  // namespace

int cmd_train(const ExperimentConfig& config) {
    LoadedData data = load_data(config);
    Model model = build_model(config, data.vocab);
    TrainOptions options = train_options(config);
    options.out_dir = config.output_dir;

    // record the exact configuration next to the artifacts
    fs::create_directories(config.output_dir);
    std::ofstream cfg(fs::path(config.output_dir) / "config.json", std::ios::trunc);
    cfg << config.serialize();

    const TrainResult result = train_model(model, data.split.train, data.split.val, options);
    if (result.diverged) {
        std::cout << "training diverged\n";
        return kOk;  // a recorded outcome, not a failure
    }
    const EpochRow& last = result.history.back();
    std::cout << "epochs " << result.history.size() << "  loss " << last.loss << "  exprate "
              << last.eval.exprate << "  wer " << last.eval.wer << "\n";
    std::cout << "artifacts in " << config.output_dir << "\n";
    return kOk;
}

int cmd_eval(const ExperimentConfig& config, const std::string& checkpoint) {
    LoadedData data = load_data(config);
    Model model = build_model(config, data.vocab);
    load_checkpoint(model.store, checkpoint);
    model.set_training(false);
    const EvalReport report = evaluate(model, data.split.val, config.max_decode_len,
                                       config.beam_width);
    fs::create_directories(config.output_dir);
    write_eval_json(report, (fs::path(config.output_dir) / "eval.json").string());
    std::cout << "exprate " << report.exprate << "  wer " << report.wer << "  le1 " << report.le1
              << "  le2 " << report.le2 << "  le3 " << report.le3 << "\n";
    return kOk;
}

int cmd_ablate(const ExperimentConfig& config, const std::string& axis) {
    LoadedData data = load_data(config);

    std::vector<AblationVariant> variants;
    if (axis == "bam_position") {
        const std::vector<std::set<int>> sites = {{1}, {2}, {3}, {1, 3}, {2, 3}, {1, 2}, {1, 2, 3}};
        for (const auto& site_set : sites) {
            AblationVariant v;
            v.model = config.model;
            v.model.encoder.bam_after = site_set;
            std::string label = "bam_after";
            for (int b : site_set) label += "_" + std::to_string(b);
            v.label = label;
            variants.push_back(std::move(v));
        }
    } else if (axis == "layer_counts") {
        const std::vector<std::array<int, 3>> triples = {{2, 2, 2}, {3, 3, 3}, {1, 2, 3}};
        for (const auto& triple : triples) {
            AblationVariant v;
            v.model = config.model;
            v.model.encoder.layers_per_block = triple;
            v.label = "layers_" + std::to_string(triple[0]) + "_" + std::to_string(triple[1]) + "_" +
                      std::to_string(triple[2]);
            variants.push_back(std::move(v));
        }
    } else if (axis == "decoder") {
        for (CellKind cell : {CellKind::gru, CellKind::gi_gru}) {
            AblationVariant v;
            v.model = config.model;
            v.model.decoder.cell = cell;
            v.label = cell == CellKind::gru ? "gru" : "gi_gru";
            variants.push_back(std::move(v));
        }
    } else {
        throw ContractViolation("unknown ablation axis: " + axis +
                                " (expected bam_position, layer_counts, or decoder)");
    }

    TrainOptions options = train_options(config);
    const auto rows = run_ablation(variants, data.split.train, data.split.val, data.vocab.size(),
                                   options);
    const std::string csv = ablation_csv(rows);
    fs::create_directories(config.output_dir);
    std::ofstream os(fs::path(config.output_dir) / ("ablation_" + axis + ".csv"), std::ios::trunc);
    if (!os) throw IoError("cannot write ablation table in " + config.output_dir);
    os << csv;
    std::cout << csv;
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    const auto results = gradcheck::run_all(seed);
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "  (max rel err "
                  << r.max_rel_err << ")\n";
        if (!r.passed) {
            std::cout << "       " << r.detail << "\n";
            ok = false;
        }
    }
    std::cout << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
    return ok ? kOk : kContractViolation;
}

int cmd_attention_dump(const ExperimentConfig& config, const std::string& checkpoint,
                       int sample_index) {
    LoadedData data = load_data(config);
    const std::vector<Sample>& pool = data.split.val;
    if (sample_index < 0 || sample_index >= static_cast<int>(pool.size()))
        throw ContractViolation("sample index " + std::to_string(sample_index) +
                                " outside validation set of size " + std::to_string(pool.size()));
    Model model = build_model(config, data.vocab);
    load_checkpoint(model.store, checkpoint);
    model.set_training(false);

    const Sample& sample = pool[static_cast<std::size_t>(sample_index)];
    const Tensor image = reshape(sample.image, {1, 1, sample.image.dim(1), sample.image.dim(2)});
    FeatureGrid grid = model.encoder->forward(image, false);
    const DecodeResult decoded = model.decoder->greedy(grid, model.attention, config.max_decode_len);

    fs::create_directories(config.output_dir);
    for (std::size_t t = 0; t < decoded.alphas.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%03zu.pgm", t);
        write_alpha_pgm((fs::path(config.output_dir) / name).string(), decoded.alphas[t],
                        grid.height(), grid.width());
    }
    std::ofstream prediction(fs::path(config.output_dir) / "prediction.txt", std::ios::trunc);
    std::vector<int> with_markers = {Vocabulary::start_id};
    with_markers.insert(with_markers.end(), decoded.tokens.begin(), decoded.tokens.end());
    prediction << detokenize(with_markers, data.vocab) << "\n";
    std::cout << "wrote " << decoded.alphas.size() << " attention maps to " << config.output_dir
              << "\n";
    return kOk;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"DenseBAM-GI handwritten math expression recognizer"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, axis = "decoder";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int sample_index = 0;

    auto add_config_flags = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
        if (needs_config) opt->required();
        cmd->add_option("--set", overrides, "dotted-path overrides KEY=VALUE")->take_all();
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--seed", seed, "root seed override")->each([&](const std::string&) {
            seed_set = true;
        });
    };

    auto* train = app.add_subcommand("train", "train a model from a config");
    add_config_flags(train, true);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_config_flags(eval, true);
    eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    auto* ablate = app.add_subcommand("ablate", "run an ablation axis");
    add_config_flags(ablate, true);
    ablate->add_option("--axis", axis, "bam_position | layer_counts | decoder");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    gradcheck_cmd->add_option("--seed", seed, "suite seed")->each([&](const std::string&) {
        seed_set = true;
    });
    auto* dump = app.add_subcommand("attention-dump", "write per-step attention maps");
    add_config_flags(dump, true);
    dump->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    dump->add_option("--sample", sample_index, "validation sample index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kContractViolation;
    }

    try {
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(seed_set ? seed : 42);

        std::ifstream is(config_path);
        if (!is) throw IoError("cannot open config: " + config_path);
        std::stringstream buffer;
        buffer << is.rdbuf();
        nlohmann::json raw;
        try {
            raw = nlohmann::json::parse(buffer.str());
        } catch (const nlohmann::json::exception& e) {
            throw ContractViolation(std::string("config: invalid JSON: ") + e.what());
        }
        for (const std::string& assignment : overrides) apply_override(raw, assignment);
        if (seed_set) raw["seed"] = seed;
        if (!out_dir.empty()) raw["output_dir"] = out_dir;
        const ExperimentConfig config = ExperimentConfig::from_json(raw);

        if (train->parsed()) return cmd_train(config);
        if (eval->parsed()) return cmd_eval(config, checkpoint_path);
        if (ablate->parsed()) return cmd_ablate(config, axis);
        if (dump->parsed()) return cmd_attention_dump(config, checkpoint_path, sample_index);
        return kContractViolation;
    } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kContractViolation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kContractViolation;
    }
}

}  // namespace dbgi::cli
