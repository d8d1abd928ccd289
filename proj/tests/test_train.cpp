#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dbgi/model.hpp"
#include "dbgi/rng.hpp"
#include "dbgi/synthetic.hpp"
#include "dbgi/train.hpp"
#include "oracles.hpp"

using namespace dbgi;

namespace {

ModelConfig micro_model(CellKind cell) {
    ModelConfig config;
    config.encoder.stem_channels = 4;
    config.encoder.growth_rate = 2;
    config.encoder.layers_per_block = {1, 1, 1};
    config.encoder.bam_after = {2, 3};
    config.encoder.reduction_ratio = 2;
    config.encoder.spatial_dilation = 2;
    config.attention.dim = 8;
    config.attention.coverage_channels = 4;
    config.attention.coverage_kernel = 3;
    config.decoder.cell = cell;
    config.decoder.hidden = 16;
    config.decoder.embedding = 8;
    config.decoder.proj = 8;
    return config;
}

}  // namespace

TEST_SUITE("train.loss") {
    TEST_CASE("uniform predictions over K=5, S=2, lambda=0: loss = 2 ln 5") {
        ParameterStore store(1);
        std::vector<Tensor> steps = {softmax(Tensor::zeros({5})), softmax(Tensor::zeros({5}))};
        Tensor loss = sequence_loss(steps, {0, 3}, store, 0.0);
        CHECK(loss.value() == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-9));
    }

    TEST_CASE("perfect one-hot with lambda=0.01 and parameter [3,4]: loss = 0.25") {
        ParameterStore store(2);
        Tensor w = store.add("w", {2}, Init::zeros, /*decay=*/true);
        w.data() = {3.0, 4.0};
        std::vector<Tensor> steps = {Tensor::from_data({3}, {0.0, 1.0, 0.0})};
        Tensor loss = sequence_loss(steps, {1}, store, 0.01);
        CHECK(loss.value() == doctest::Approx(0.25).epsilon(1e-9));
    }

    TEST_CASE("random case matches the direct-summation oracle") {
        ParameterStore store(3);
        Tensor w1 = store.add("w1", {2, 2}, Init::glorot_uniform, true);
        Tensor b1 = store.add("b1", {2}, Init::zeros, false);  // biases carry no decay
        b1.data() = {5.0, -5.0};
        Rng rng(4);
        std::vector<Tensor> steps;
        std::vector<int> labels;
        double expect = 0.0;
        for (int t = 0; t < 6; ++t) {
            Tensor logits = Tensor::zeros({4});
            for (double& v : logits.data()) v = rng.normal();
            steps.push_back(softmax(logits));
            labels.push_back(static_cast<int>(rng.below(4)));
            expect -= std::log(steps.back().data()[static_cast<std::size_t>(labels.back())] + 1e-12);
        }
        const double lambda = 0.037;
        for (double v : w1.data()) expect += lambda * v * v;
        Tensor loss = sequence_loss(steps, labels, store, lambda);
        CHECK(loss.value() == doctest::Approx(expect).epsilon(1e-12));
    }

    TEST_CASE("lambda > 0 strictly exceeds lambda = 0 with nonzero parameters") {
        ParameterStore store(5);
        Tensor w = store.add("w", {3}, Init::zeros, true);
        w.data() = {0.1, 0.0, -0.2};
        std::vector<Tensor> steps = {softmax(Tensor::zeros({4}))};
        CHECK(sequence_loss(steps, {0}, store, 0.01).value() >
              sequence_loss(steps, {0}, store, 0.0).value());
    }

    TEST_CASE("floored probabilities are counted as warnings") {
        ParameterStore store(6);
        std::vector<Tensor> steps = {Tensor::from_data({2}, {1.0, 0.0})};
        LossStats stats;
        Tensor loss = sequence_loss(steps, {1}, store, 0.0, false, &stats);
        CHECK(stats.floor_hits == 1);
        CHECK(loss.all_finite());
        CHECK(loss.value() == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
    }

    TEST_CASE("count mismatch between probabilities and labels throws") {
        ParameterStore store(7);
        std::vector<Tensor> steps = {softmax(Tensor::zeros({4}))};
        CHECK_THROWS_AS(sequence_loss(steps, {0, 1}, store, 0.0), ContractViolation);
    }
}

TEST_SUITE("train.sgd") {
    TEST_CASE("zero grad and zero velocity leave parameters unchanged") {
        ParameterStore store(8);
        Tensor w = store.add("w", {3}, Init::glorot_uniform, true);
        const std::vector<double> before = w.data();
        SgdMomentum opt(store);
        opt.step(store, 0.1, 0.9);
        CHECK(w.data() == before);
    }

    TEST_CASE("first step moves by -lr * grad") {
        ParameterStore store(9);
        Tensor w = store.add("w", {2}, Init::zeros, true);
        w.data() = {1.0, 2.0};
        w.grad_mut() = {0.5, -1.0};
        SgdMomentum opt(store);
        opt.step(store, 0.1, 0.9);
        CHECK(w.data()[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
        CHECK(w.data()[1] == doctest::Approx(2.0 + 0.1).epsilon(1e-15));
    }

    TEST_CASE("three unit-gradient steps build velocities 1, 1.9, 2.71") {
        ParameterStore store(10);
        Tensor w = store.add("w", {1}, Init::zeros, true);
        SgdMomentum opt(store);
        double position = 0.0;
        const double lr = 0.01;
        for (const double expect_velocity : {1.0, 1.9, 2.71}) {
            w.zero_grad();
            w.grad_mut() = {1.0};
            opt.step(store, lr, 0.9);
            CHECK(opt.velocity(0)[0] == doctest::Approx(expect_velocity).epsilon(1e-12));
            position -= lr * expect_velocity;
        }
        // closed-form geometric accumulation matches the end position
        CHECK(w.data()[0] == doctest::Approx(position).epsilon(1e-12));
    }

    TEST_CASE("global-norm clipping rescales gradients") {
        ParameterStore store(11);
        Tensor w = store.add("w", {2}, Init::zeros, true);
        w.grad_mut() = {30.0, 40.0};  // norm 50
        const double norm = clip_gradients(store, 5.0);
        CHECK(norm == doctest::Approx(50.0));
        CHECK(w.grad()[0] == doctest::Approx(3.0));
        CHECK(w.grad()[1] == doctest::Approx(4.0));
    }
}

TEST_SUITE("train.scheduler") {
    TEST_CASE("strictly improving history keeps the learning rate") {
        std::vector<double> history;
        for (int i = 0; i < 30; ++i) history.push_back(static_cast<double>(i));
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-4));
    }

    TEST_CASE("ten consecutive non-improving epochs decay once: 1e-4 -> 1e-5") {
        std::vector<double> history(11, 50.0);  // best at epoch 1, ten stalls after
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-5));
        // one epoch earlier the window is still open
        history.pop_back();
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-4));
    }

    TEST_CASE("25 flat epochs produce exactly two decays under re-arm semantics") {
        std::vector<double> history(25, 42.0);
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-6));
    }

    TEST_CASE("a new best re-arms the window") {
        std::vector<double> history(11, 10.0);
        history.push_back(11.0);  // new best at epoch 12
        for (int i = 0; i < 9; ++i) history.push_back(5.0);
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-5));  // only the first decay
        history.push_back(5.0);  // tenth stall after the best
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-6));
    }

    TEST_CASE("ties with the best do not reset patience") {
        std::vector<double> history(1, 7.0);
        for (int i = 0; i < 10; ++i) history.push_back(7.0);  // equal, never better
        CHECK(plateau_lr(history, 1e-4, 10, 10.0) == doctest::Approx(1e-5));
    }
}

TEST_SUITE("train.metrics") {
    TEST_CASE("exact predictions: exprate 100, wer 0, all <=k at 100") {
        std::vector<std::vector<int>> refs = {{1, 2, 3}, {4}, {5, 6}};
        EvalReport report = score_pairs(refs, refs);
        CHECK(report.exprate == 100.0);
        CHECK(report.wer == 0.0);
        CHECK(report.le1 == 100.0);
        CHECK(report.le3 == 100.0);
    }

    TEST_CASE("single substitution counts toward <=1 but not exprate") {
        Vocabulary vocab = synthetic_vocabulary();
        std::vector<int> ref, hyp;
        for (const std::string& t : split_latex("\\frac 1 2")) ref.push_back(vocab.id(t));
        for (const std::string& t : split_latex("\\frac 1 3")) hyp.push_back(vocab.id(t));
        REQUIRE(ref.size() == 3);
        CHECK(edit_distance(ref, hyp) == 1);
        EvalReport report = score_pairs({ref}, {hyp});
        CHECK(report.exprate == 0.0);
        CHECK(report.le1 == 100.0);
        CHECK(report.wer == doctest::Approx(100.0 / 3.0));
    }

    TEST_CASE("200 random pairs agree exactly with the full-matrix DP oracle") {
        Rng rng(12);
        std::vector<std::vector<int>> refs, hyps;
        for (int i = 0; i < 200; ++i) {
            std::vector<int> r, h;
            const int rl = 1 + static_cast<int>(rng.below(12));
            const int hl = static_cast<int>(rng.below(13));
            for (int j = 0; j < rl; ++j) r.push_back(static_cast<int>(rng.below(5)));
            for (int j = 0; j < hl; ++j) h.push_back(static_cast<int>(rng.below(5)));
            refs.push_back(std::move(r));
            hyps.push_back(std::move(h));
        }
        EvalReport report = score_pairs(refs, hyps);
        std::int64_t total_distance = 0, total_tokens = 0;
        std::size_t exact = 0, w1 = 0, w2 = 0, w3 = 0;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            const int d = oracle::edit_distance(refs[i], hyps[i]);
            CHECK(report.distances[i] == d);
            total_distance += d;
            total_tokens += static_cast<std::int64_t>(refs[i].size());
            exact += d == 0;
            w1 += d <= 1;
            w2 += d <= 2;
            w3 += d <= 3;
        }
        CHECK(report.exprate == doctest::Approx(100.0 * exact / 200.0));
        CHECK(report.le1 == doctest::Approx(100.0 * w1 / 200.0));
        CHECK(report.le2 == doctest::Approx(100.0 * w2 / 200.0));
        CHECK(report.le3 == doctest::Approx(100.0 * w3 / 200.0));
        CHECK(report.wer ==
              doctest::Approx(100.0 * static_cast<double>(total_distance) / total_tokens));
        // nesting holds on every report
        CHECK(report.exprate <= report.le1);
        CHECK(report.le1 <= report.le2);
        CHECK(report.le2 <= report.le3);
        CHECK(report.le3 <= 100.0);
    }
}

TEST_SUITE("train.checkpoint") {
    TEST_CASE("round trip narrows to f32 and widens back") {
        namespace fs = std::filesystem;
        const std::string path = (fs::temp_directory_path() / "dbgi_ckpt_test.bin").string();
        ParameterStore store(13);
        Tensor w = store.add("block.w", {2, 3}, Init::glorot_uniform, true);
        Tensor buffer = store.add_buffer("block.running", {3}, 0.5);
        const std::vector<double> original = w.data();
        save_checkpoint(store, path);

        for (double& v : w.data()) v = 99.0;
        load_checkpoint(store, path);
        for (std::size_t i = 0; i < original.size(); ++i)
            CHECK(w.data()[i] == static_cast<double>(static_cast<float>(original[i])));
        CHECK(buffer.data()[0] == 0.5);
        fs::remove(path);
    }

    TEST_CASE("missing tensors fail unless allowed; shape mismatch always fails") {
        namespace fs = std::filesystem;
        const std::string path = (fs::temp_directory_path() / "dbgi_ckpt_test2.bin").string();
        ParameterStore small(14);
        small.add("a", {2}, Init::glorot_uniform, true);
        save_checkpoint(small, path);

        ParameterStore larger(15);
        larger.add("a", {2}, Init::zeros, true);
        Tensor extra = larger.add("b", {3}, Init::glorot_uniform, true);
        const std::vector<double> extra_before = extra.data();
        CHECK_THROWS_AS(load_checkpoint(larger, path), IoError);
        load_checkpoint(larger, path, /*allow_missing=*/true);
        CHECK(extra.data() == extra_before);

        ParameterStore wrong(16);
        wrong.add("a", {3}, Init::zeros, true);
        CHECK_THROWS_AS(load_checkpoint(wrong, path, true), IoError);
        fs::remove(path);
    }

    TEST_CASE("checkpoint header carries the magic bytes") {
        namespace fs = std::filesystem;
        const std::string path = (fs::temp_directory_path() / "dbgi_ckpt_test3.bin").string();
        ParameterStore store(17);
        store.add("x", {1}, Init::zeros, true);
        save_checkpoint(store, path);
        std::ifstream is(path, std::ios::binary);
        char magic[4];
        is.read(magic, 4);
        CHECK(std::string(magic, 4) == "DBGI");
        fs::remove(path);
    }
}

TEST_SUITE("train.loop") {
    TEST_CASE("teacher-forced loss decreases over 50 SGD steps on one sample") {
        SyntheticConfig gen;
        gen.seed = 77;
        gen.count = 1;
        gen.grammar_depth = 0;
        gen.target_height = 32;
        const Vocabulary vocab = synthetic_vocabulary();
        const Sample sample = generate_synthetic(gen, vocab).front();

        Model model(micro_model(CellKind::gi_gru), vocab.size(), Vocabulary::start_id,
                    Vocabulary::end_id, 78);
        SgdMomentum opt(model.store);
        const Tensor image = reshape(sample.image, {1, 1, sample.image.dim(1), sample.image.dim(2)});

        double first = 0.0, last = 0.0;
        for (int step = 0; step < 50; ++step) {
            model.store.zero_grad();
            DecodeResult forced = model.decode_teacher_forced(image, sample.targets());
            Tensor loss =
                sequence_loss(forced.step_probabilities, sample.targets(), model.store, 0.0);
            if (step == 0) first = loss.value();
            last = loss.value();
            backward(loss);
            opt.step(model.store, 0.01, 0.9);
        }
        CHECK(last < first);
        CHECK(last < 0.1);  // single-sample overfit actually bites
    }

    TEST_CASE("identical seeds give identical models and identical ablation tables") {
        SyntheticConfig gen;
        gen.seed = 5;
        gen.count = 6;
        gen.grammar_depth = 0;
        gen.target_height = 32;
        const Vocabulary vocab = synthetic_vocabulary();
        const std::vector<Sample> samples = generate_synthetic(gen, vocab);

        // same-seed models start bitwise identical
        Model a(micro_model(CellKind::gi_gru), vocab.size(), 1, 2, 123);
        Model b(micro_model(CellKind::gi_gru), vocab.size(), 1, 2, 123);
        for (std::size_t i = 0; i < a.store.entries().size(); ++i)
            CHECK(a.store.entries()[i].tensor.data() == b.store.entries()[i].tensor.data());

        std::vector<AblationVariant> variants;
        for (CellKind cell : {CellKind::gru, CellKind::gi_gru})
            variants.push_back({cell == CellKind::gru ? "gru" : "gi_gru", micro_model(cell)});

        TrainOptions options;
        options.config.seed = 9;
        options.config.lr = 0.02;
        options.config.max_epochs = 2;
        options.config.batch_size = 3;
        options.max_decode_len = 8;

        const auto rows1 = run_ablation(variants, samples, samples, vocab.size(), options);
        const auto rows2 = run_ablation(variants, samples, samples, vocab.size(), options);
        CHECK(ablation_csv(rows1) == ablation_csv(rows2));
        REQUIRE(rows1.size() == 2);
        CHECK(rows1[0].label == "gru");
        CHECK(rows1[1].label == "gi_gru");
    }

    TEST_CASE("train_model writes csv, report, and checkpoints; rows match epochs") {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "dbgi_train_test";
        fs::remove_all(dir);

        SyntheticConfig gen;
        gen.seed = 6;
        gen.count = 4;
        gen.grammar_depth = 0;
        gen.target_height = 32;
        const Vocabulary vocab = synthetic_vocabulary();
        const std::vector<Sample> samples = generate_synthetic(gen, vocab);

        Model model(micro_model(CellKind::gi_gru), vocab.size(), 1, 2, 7);
        TrainOptions options;
        options.config.seed = 7;
        options.config.lr = 0.02;
        options.config.max_epochs = 1;
        options.config.batch_size = 2;
        options.max_decode_len = 8;
        options.out_dir = dir.string();

        const TrainResult result = train_model(model, samples, samples, options);
        CHECK(result.history.size() == 1);
        CHECK(fs::exists(dir / "metrics.csv"));
        CHECK(fs::exists(dir / "report.json"));
        CHECK(fs::exists(dir / "final.ckpt"));
        CHECK(fs::exists(dir / "best.ckpt"));

        std::ifstream csv(dir / "metrics.csv");
        std::string line;
        int lines = 0;
        while (std::getline(csv, line)) ++lines;
        CHECK(lines == 2);  // header + one epoch
        fs::remove_all(dir);
    }

    TEST_CASE("warm start from a plain-GRU checkpoint zeroes the auxiliary projections") {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "dbgi_warm_test";
        fs::remove_all(dir);
        fs::create_directories(dir);

        const Vocabulary vocab = synthetic_vocabulary();
        Model plain(micro_model(CellKind::gru), vocab.size(), 1, 2, 31);
        const std::string ckpt = (dir / "gru.ckpt").string();
        save_checkpoint(plain.store, ckpt);

        Model gated(micro_model(CellKind::gi_gru), vocab.size(), 1, 2, 32);
        load_checkpoint(gated.store, ckpt, /*allow_missing=*/true);
        for (Parameter& p : gated.store.entries())
            if (p.name.ends_with(".w_aux"))
                std::fill(p.tensor.data().begin(), p.tensor.data().end(), 0.0);

        // shared weights came over (through the f32 narrowing), aux start at zero
        Tensor from_plain = plain.store.find("decoder.level1.u_cand");
        Tensor into_gated = gated.store.find("decoder.level1.u_cand");
        for (std::size_t i = 0; i < from_plain.data().size(); ++i)
            CHECK(into_gated.data()[i] ==
                  static_cast<double>(static_cast<float>(from_plain.data()[i])));
        for (double v : gated.store.find("decoder.level1.w_aux").data()) CHECK(v == 0.0);
        fs::remove_all(dir);
    }
}
