#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dlt/errors.hpp"
#include "dlt/rng.hpp"
#include "dlt/trainer.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace dlt;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.blobs = BlobParams{100, 3, 6, 6.0, 0.8};
    c.test_fraction = 0.2;
    c.noise.kind = NoiseKind::Symmetric;
    c.noise.rate = 0.3;
    c.hidden = {16};
    c.optimizer.lr = 0.05;
    c.optimizer.momentum = 0.9;
    c.optimizer.weight_decay = 0.0;
    c.optimizer.lr_drop_epoch = 0;
    c.policy.window_batches = 8;
    c.policy.warm_epochs = 3;
    c.policy.grad_epochs = 5;
    c.ssl.lambda_n = 1.0;
    c.ssl.lambda_r = 1.0;
    c.ssl.k_augment = 2;
    c.ssl.augment_strength = 0.08;
    c.mode = TrainMode::DltSlideWindow;
    c.total_epochs = 12;
    c.batch_size = 32;
    c.seed = 5;
    return c;
}

std::string metrics_csv_string(const std::vector<EpochMetrics>& rows) {
    const std::string path = "trainer_test_metrics.csv";
    write_metrics_csv(path, rows);
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    std::remove(path.c_str());
    return ss.str();
}

} // namespace

TEST_CASE("warm-up epochs record every sample") {
    const TrainConfig c = small_config();
    TrainTestSplit data = build_data(c);
    MlpModel model = make_mlp(data.train.dim(), c.hidden,
                              data.train.class_count, 3);
    SgdState sgd = SgdState::init(model, c.optimizer.lr, c.optimizer.momentum,
                                  c.optimizer.weight_decay);
    LossLedger ledger(data.train.size(), c.policy.window_batches);
    warmup_epoch(model, data.train, sgd, ledger, 1, 99, c.batch_size);
    CHECK(ledger.epoch_complete(1));
    CHECK(ledger.epoch_losses(1).size() == data.train.size());
}

TEST_CASE("warm-up training reduces the loss on clean blobs") {
    TrainConfig c = small_config();
    c.noise.kind = NoiseKind::None;
    TrainTestSplit data = build_data(c);
    MlpModel model = make_mlp(data.train.dim(), c.hidden,
                              data.train.class_count, 3);
    SgdState sgd = SgdState::init(model, c.optimizer.lr, c.optimizer.momentum,
                                  0.0);
    LossLedger ledger(data.train.size(), c.policy.window_batches);
    double first = 0.0, last = 0.0;
    for (std::size_t epoch = 1; epoch <= 5; ++epoch) {
        const double mean =
            warmup_epoch(model, data.train, sgd, ledger, epoch, 99, c.batch_size);
        if (epoch == 1) first = mean;
        last = mean;
    }
    CHECK(last < first);
}

TEST_CASE("full runs are deterministic") {
    const TrainConfig c = small_config();
    const RunArtifact a = train(c);
    const RunArtifact b = train(c);
    REQUIRE(a.metrics.size() == b.metrics.size());
    CHECK(metrics_csv_string(a.metrics) == metrics_csv_string(b.metrics));
    for (std::size_t l = 0; l < a.model.layers.size(); ++l)
        CHECK(a.model.layers[l].weight == b.model.layers[l].weight);
}

TEST_CASE("zero noise rate degenerates to supervised training") {
    TrainConfig c = small_config();
    c.noise.kind = NoiseKind::None;  // true rate source resolves w = 0
    const RunArtifact artifact = train(c);
    CHECK(artifact.noise_rate_used == 0.0);
    for (const EpochMetrics& row : artifact.metrics) {
        if (!row.has_selection) continue;
        CHECK(row.q == 1.0);
        std::size_t noisy_total = 0;
        for (std::size_t p = 0; p < 4; ++p) noisy_total += row.routed_noisy[p];
        CHECK(noisy_total == 0);
    }
}

TEST_CASE("per-epoch routing counts sum to N and precision/recall bounded") {
    const TrainConfig c = small_config();
    const RunArtifact artifact = train(c);
    const std::size_t n = artifact.train_data.size();
    bool saw_selection = false;
    for (const EpochMetrics& row : artifact.metrics) {
        if (!row.has_selection) continue;
        saw_selection = true;
        std::size_t total = 0;
        for (std::size_t p = 0; p < 4; ++p)
            total += row.routed_clean[p] + row.routed_noisy[p];
        CHECK(total == n);
        CHECK(row.selection_precision >= 0.0);
        CHECK(row.selection_precision <= 1.0);
        CHECK(row.selection_recall >= 0.0);
        CHECK(row.selection_recall <= 1.0);
    }
    CHECK(saw_selection);
}

TEST_CASE("lambda_n = lambda_r = 0 reduces to the clean-side update") {
    TrainConfig c = small_config();
    c.ssl.lambda_n = 0.0;
    c.ssl.lambda_r = 0.0;
    TrainTestSplit data = build_data(c);

    // Path one: the real trainer, one DLT epoch after warm-up.
    MlpModel model_a = make_mlp(data.train.dim(), c.hidden,
                                data.train.class_count, 7);
    MlpModel model_b = model_a;
    SgdState sgd_a = SgdState::init(model_a, c.optimizer.lr,
                                    c.optimizer.momentum, 0.0);
    SgdState sgd_b = sgd_a;
    LossLedger ledger_a(data.train.size(), c.policy.window_batches);
    LossLedger ledger_b(data.train.size(), c.policy.window_batches);
    const std::uint64_t run_seed = 1234;

    ThresholdPolicy policy = c.policy;
    policy.noise_rate = 0.3;
    for (std::size_t epoch = 1; epoch <= policy.warm_epochs; ++epoch) {
        warmup_epoch(model_a, data.train, sgd_a, ledger_a, epoch, run_seed,
                     c.batch_size);
        warmup_epoch(model_b, data.train, sgd_b, ledger_b, epoch, run_seed,
                     c.batch_size);
    }
    const std::size_t epoch = policy.warm_epochs + 1;
    dlt_epoch(model_a, data.train, sgd_a, ledger_a, policy, c.ssl,
              TrainMode::DltSlideWindow, epoch, run_seed, c.batch_size);

    // Path two: manual recomputation of the clean-side-only update.
    const double q = selection_proportion(policy, epoch);
    const std::vector<std::size_t> perm =
        epoch_permutation(run_seed, epoch, data.train.size());
    for (std::size_t start = 0, batch = 0; start < perm.size();
         start += c.batch_size, ++batch) {
        const std::size_t stop = std::min(perm.size(), start + c.batch_size);
        const std::vector<std::size_t> ids(perm.begin() + start,
                                           perm.begin() + stop);
        Matrix X(ids.size(), data.train.dim());
        Matrix Y(ids.size(), data.train.class_count, 0.0);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            std::copy(data.train.features.row(ids[j]),
                      data.train.features.row(ids[j]) + data.train.dim(),
                      X.row(j));
            Y(j, static_cast<std::size_t>(data.train.observed_labels[ids[j]])) =
                1.0;
        }
        const Matrix probs = forward_batch(model_b, X);
        const std::vector<double> losses =
            per_sample_losses(probs, Y, LossKind::CrossEntropy);
        const double tau =
            threshold_slide_window(ledger_b, q, policy.window_batches);
        ledger_b.record(epoch, batch, ids, losses);
        const BatchSplit split = split_batch(ids, losses, tau);
        const DltBatch assembled = assemble_dlt_batch(
            model_b, data.train, split, c.ssl, run_seed, epoch, batch);
        Gradients grads = Gradients::zeros_like(model_b);
        if (assembled.clean_x.rows > 0) {
            const std::vector<double> ones(assembled.clean_x.rows, 1.0);
            grads.add_scaled(backward(model_b, assembled.clean_x,
                                      assembled.clean_y,
                                      LossKind::CrossEntropy, ones),
                             1.0);
        }
        sgd_step(model_b, sgd_b, grads);
    }

    for (std::size_t l = 0; l < model_a.layers.size(); ++l) {
        CHECK(model_a.layers[l].weight == model_b.layers[l].weight);
        CHECK(model_a.layers[l].bias == model_b.layers[l].bias);
    }
}

TEST_CASE("evaluate closed forms") {
    TrainConfig c = small_config();
    c.noise.kind = NoiseKind::None;
    TrainTestSplit data = build_data(c);

    SUBCASE("constant predictor scores the class share") {
        MlpModel m = make_mlp(data.test.dim(), {}, data.test.class_count, 1);
        for (DenseLayer& l : m.layers) l.weight.fill(0.0);
        m.layers.back().bias[0] = 100.0;  // always argmax class 0
        const double acc = evaluate(m, data.test);
        CHECK(acc == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("accuracy is bounded") {
        MlpModel m = make_mlp(data.test.dim(), {8}, data.test.class_count, 2);
        const double acc = evaluate(m, data.test);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
    SUBCASE("a fitted model scores perfectly on easy blobs") {
        const RunArtifact artifact = train(c);
        CHECK(evaluate(artifact.model, artifact.train_data) == 1.0);
    }
}

TEST_CASE("metrics csv schema is stable across modes") {
    TrainConfig c = small_config();
    c.total_epochs = 5;
    c.mode = TrainMode::PlainCe;
    const RunArtifact plain = train(c);
    const std::string csv = metrics_csv_string(plain.metrics);
    std::istringstream is(csv);
    std::string header;
    std::getline(is, header);
    CHECK(header == metrics_csv_header());
    std::string row;
    std::getline(is, row);
    // 15 columns, selection fields empty.
    CHECK(std::count(row.begin(), row.end(), ',') == 14);
    CHECK(row.find(",,") != std::string::npos);

    c.mode = TrainMode::DltSlideWindow;
    const RunArtifact dlt_run = train(c);
    const std::string dlt_csv = metrics_csv_string(dlt_run.metrics);
    std::istringstream is2(dlt_csv);
    std::getline(is2, header);
    CHECK(header == metrics_csv_header());
    // Last row is a DLT epoch: all columns populated.
    std::string last;
    while (std::getline(is2, row))
        if (!row.empty()) last = row;
    CHECK(std::count(last.begin(), last.end(), ',') == 14);
    CHECK(last.find(",,") == std::string::npos);
}

TEST_CASE("stationary runs route almost exactly q of each epoch clean") {
    // A frozen model makes consecutive epochs share their loss distribution;
    // the last-epoch threshold then admits ceil(q*N) samples up to boundary
    // effects of one sample per batch.
    TrainConfig c = small_config();
    c.optimizer.lr = 1e-15;
    c.optimizer.momentum = 0.0;
    c.mode = TrainMode::DltLastEpoch;
    c.total_epochs = 14;
    const RunArtifact artifact = train(c);
    const double n = static_cast<double>(artifact.train_data.size());
    const double batches = std::ceil(n / static_cast<double>(c.batch_size));
    for (const EpochMetrics& row : artifact.metrics) {
        if (!row.has_selection) continue;
        std::size_t clean_total = 0;
        for (std::size_t p = 0; p < 4; ++p) clean_total += row.routed_clean[p];
        const double fraction = static_cast<double>(clean_total) / n;
        CHECK(std::abs(fraction - row.q) <= batches / n);
    }
}

TEST_CASE("live DLT runs track the selection proportion loosely") {
    const TrainConfig c = small_config();
    const RunArtifact artifact = train(c);
    const double n = static_cast<double>(artifact.train_data.size());
    for (const EpochMetrics& row : artifact.metrics) {
        if (!row.has_selection) continue;
        std::size_t clean_total = 0;
        for (std::size_t p = 0; p < 4; ++p) clean_total += row.routed_clean[p];
        CHECK(std::abs(static_cast<double>(clean_total) / n - row.q) <= (0.05 + 8.0 / n));
    }
}

TEST_CASE("slide-window cold start behaves like last-epoch over the data") {
    // With s covering more batches than were ever recorded, the first
    // post-warm-up threshold pools exactly the warm-up epoch, i.e. the
    // last-epoch rule.
    LossLedger ledger(8, 1000);
    ledger.record(1, 0, {0, 1, 2, 3}, {0.4, 0.1, 0.8, 0.3});
    ledger.record(1, 1, {4, 5, 6, 7}, {0.9, 0.2, 0.6, 0.5});
    for (double q : {0.2, 0.5, 0.8, 1.0})
        CHECK(threshold_slide_window(ledger, q, 1000) ==
              threshold_last_epoch(ledger, 2, q));
}

TEST_CASE("hard study with ratio zero matches the plain run") {
    TrainConfig c = small_config();
    c.total_epochs = 6;
    c.hard.ratio = 0.0;
    const HardStudyReport report = run_hard_sample_study(c);
    CHECK(report.hard_count == 0);

    TrainConfig plain = c;
    plain.mode = TrainMode::PlainCe;
    const RunArtifact reference = train(plain);
    REQUIRE(report.plain_metrics.size() == reference.metrics.size());
    CHECK(metrics_csv_string(report.plain_metrics) ==
          metrics_csv_string(reference.metrics));
    // No hard group: the trajectory is all zeros and routing is undefined.
    for (double v : report.mean_loss_hard) CHECK(v == 0.0);
}

TEST_CASE("hard study tags and counts hard samples") {
    TrainConfig c = small_config();
    c.total_epochs = 6;
    c.hard.ratio = 1.0;
    c.hard.subset_fraction = 0.1;
    const HardStudyReport report = run_hard_sample_study(c);
    CHECK(report.hard_count == 30);  // 10% of 300
    CHECK(report.mean_loss_hard.size() == c.total_epochs);
    CHECK(report.hard_routed_clean_fraction >= 0.0);
    CHECK(report.hard_routed_clean_fraction <= 1.0);
}

TEST_CASE("fgsm hard study requires an attack model") {
    TrainConfig c = small_config();
    c.hard.fgsm = true;
    CHECK_THROWS_AS(run_hard_sample_study(c, nullptr), StateError);
}

TEST_CASE("seed resolution prefers flag, then environment, then config") {
    unsetenv("DLT_SEED");
    CHECK(resolve_seed(std::nullopt, 42) == 42);
    setenv("DLT_SEED", "77", 1);
    CHECK(resolve_seed(std::nullopt, 42) == 77);
    CHECK(resolve_seed(123, 42) == 123);
    setenv("DLT_SEED", "not-a-number", 1);
    CHECK_THROWS_AS(resolve_seed(std::nullopt, 42), ConfigError);
    unsetenv("DLT_SEED");
}
