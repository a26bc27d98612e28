#include "dlt/trainer.hpp"

#include "dlt/errors.hpp"
#include "dlt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

namespace dlt {

namespace {

// Seed-stream tags, all hanging off config.seed or the derived run seed.
enum : std::uint64_t {
    kStreamData = 0x01,
    kStreamNoise = 0x02,
    kStreamModel = 0x03,
    kStreamRun = 0x04,
    kStreamHard = 0x05,
    kStreamEstimator = 0x06,
    kStreamFileSplit = 0x07,
    kStreamPerm = 0x10,
    kStreamAug = 0x20,
    kStreamMix = 0x30,
};

std::size_t provenance_index(Provenance p) {
    return static_cast<std::size_t>(p);
}

Matrix rows_of(const Dataset& ds, const std::vector<std::size_t>& ids) {
    Matrix X(ids.size(), ds.dim());
    for (std::size_t j = 0; j < ids.size(); ++j)
        std::copy(ds.features.row(ids[j]), ds.features.row(ids[j]) + ds.dim(),
                  X.row(j));
    return X;
}

Matrix observed_one_hots(const Dataset& ds, const std::vector<std::size_t>& ids) {
    Matrix Y(ids.size(), ds.class_count, 0.0);
    for (std::size_t j = 0; j < ids.size(); ++j)
        Y(j, static_cast<std::size_t>(ds.observed_labels[ids[j]])) = 1.0;
    return Y;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.rows == 0) return b;
    if (b.rows == 0) return a;
    if (a.cols != b.cols) throw ShapeError("vstack: column mismatch");
    Matrix out(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

struct BatchRange {
    std::size_t batches = 0;
    std::size_t batch_size = 0;

    std::vector<std::size_t> ids(const std::vector<std::size_t>& perm,
                                 std::size_t p) const {
        const std::size_t lo = p * batch_size;
        const std::size_t hi = std::min(perm.size(), lo + batch_size);
        return std::vector<std::size_t>(perm.begin() + lo, perm.begin() + hi);
    }
};

BatchRange batch_range(std::size_t n, std::size_t batch_size) {
    BatchRange r;
    r.batch_size = batch_size;
    r.batches = (n + batch_size - 1) / batch_size;
    return r;
}

} // namespace

const char* train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::DltLastEpoch: return "dlt-last-epoch";
        case TrainMode::DltSlideWindow: return "dlt-slide-window";
        case TrainMode::PlainCe: return "plain-ce";
    }
    return "unknown";
}

TrainMode train_mode_from_name(const std::string& name) {
    if (name == "dlt-last-epoch") return TrainMode::DltLastEpoch;
    if (name == "dlt-slide-window") return TrainMode::DltSlideWindow;
    if (name == "plain-ce") return TrainMode::PlainCe;
    throw ConfigError("unknown train mode: " + name);
}

void TrainConfig::validate() const {
    if (dataset_path.empty()) {
        if (blobs.classes < 2 || blobs.n_per_class == 0 || blobs.dim == 0)
            throw ContractError("config: blob dataset parameters invalid");
        if (blobs.cluster_std <= 0.0)
            throw ContractError("config: cluster_std must be > 0");
    }
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ContractError("config: test_fraction must be in (0,1)");
    if (noise.rate < 0.0 || noise.rate >= 1.0)
        throw ContractError("config: noise rate must be in [0,1)");
    if (noise.kind == NoiseKind::Asymmetric && dataset_path.empty() &&
        noise.class_map.size() != blobs.classes)
        throw ContractError("config: asymmetric class_map size must equal classes");
    for (std::size_t h : hidden)
        if (h == 0) throw ContractError("config: hidden sizes must be >= 1");
    if (optimizer.lr <= 0.0) throw ContractError("config: lr must be > 0");
    if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0)
        throw ContractError("config: momentum must be in [0,1)");
    if (optimizer.weight_decay < 0.0)
        throw ContractError("config: weight_decay must be >= 0");
    if (optimizer.lr_drop_factor <= 0.0 || optimizer.lr_drop_factor > 1.0)
        throw ContractError("config: lr_drop_factor must be in (0,1]");
    policy.validate();
    if (policy.warm_epochs >= total_epochs)
        throw ContractError("config: warm_epochs must be < total_epochs");
    ssl.validate();
    if (batch_size == 0) throw ContractError("config: batch_size must be >= 1");
    if (manual_rate < 0.0 || manual_rate >= 1.0)
        throw ContractError("config: manual noise rate must be in [0,1)");
    if (estimator_theta < 0.0 || estimator_theta > 1.0)
        throw ContractError("config: estimator theta must be in [0,1]");
    if (hard.ratio < 0.0) throw ContractError("config: hard ratio must be >= 0");
    if (hard.subset_fraction < 0.0 || hard.subset_fraction > 1.0)
        throw ContractError("config: hard subset_fraction must be in [0,1]");
    if (hard.erase_fraction <= 0.0 || hard.erase_fraction >= 1.0)
        throw ContractError("config: hard erase_fraction must be in (0,1)");
    if (hard.fgsm_epsilon < 0.0)
        throw ContractError("config: fgsm_epsilon must be >= 0");
}

TrainConfig TrainConfig::from_config(ConfigFile& cfg) {
    TrainConfig c;

    const std::string dataset_kind = cfg.get_string("dataset.kind", "blobs");
    if (dataset_kind == "file") {
        c.dataset_path = cfg.get_string("dataset.path");
    } else if (dataset_kind != "blobs") {
        throw ConfigError("dataset.kind must be blobs or file");
    }
    c.blobs.n_per_class = cfg.get_size("dataset.n_per_class", 1000);
    c.blobs.classes = cfg.get_size("dataset.classes", 4);
    c.blobs.dim = cfg.get_size("dataset.dim", 16);
    c.blobs.center_spread = cfg.get_double("dataset.center_spread", 5.0);
    c.blobs.cluster_std = cfg.get_double("dataset.cluster_std", 1.0);
    c.test_fraction = cfg.get_double("dataset.test_fraction", 0.2);

    const std::string noise_kind = cfg.get_string("noise.kind", "none");
    if (noise_kind == "none")
        c.noise.kind = NoiseKind::None;
    else if (noise_kind == "symmetric")
        c.noise.kind = NoiseKind::Symmetric;
    else if (noise_kind == "asymmetric")
        c.noise.kind = NoiseKind::Asymmetric;
    else
        throw ConfigError("noise.kind must be none, symmetric, or asymmetric");
    c.noise.rate = cfg.get_double("noise.rate", 0.4);
    c.noise.class_map.clear();
    for (long long v : cfg.get_int_list("noise.class_map", {}))
        c.noise.class_map.push_back(static_cast<int>(v));

    c.hidden.clear();
    for (long long v : cfg.get_int_list("model.hidden", {64, 64})) {
        if (v <= 0) throw ConfigError("model.hidden entries must be >= 1");
        c.hidden.push_back(static_cast<std::size_t>(v));
    }

    c.optimizer.lr = cfg.get_double("optimizer.lr", 0.02);
    c.optimizer.momentum = cfg.get_double("optimizer.momentum", 0.9);
    c.optimizer.weight_decay = cfg.get_double("optimizer.weight_decay", 5e-4);
    c.optimizer.lr_drop_epoch = cfg.get_size("optimizer.lr_drop_epoch", 60);
    c.optimizer.lr_drop_factor = cfg.get_double("optimizer.lr_drop_factor", 0.1);

    c.policy.window_batches = cfg.get_size("policy.window_batches", 16);
    c.policy.warm_epochs = cfg.get_size("policy.warm_epochs", 10);
    c.policy.grad_epochs = cfg.get_size("policy.grad_epochs", 40);
    const std::string source =
        cfg.get_string("policy.noise_rate_source", "true");
    if (source == "true")
        c.rate_source = RateSource::True;
    else if (source == "estimated")
        c.rate_source = RateSource::Estimated;
    else if (source == "manual")
        c.rate_source = RateSource::Manual;
    else
        throw ConfigError(
            "policy.noise_rate_source must be true, estimated, or manual");
    c.manual_rate = cfg.get_double("policy.noise_rate", 0.0);

    c.ssl.lambda_n = cfg.get_double("ssl.lambda_n", 25.0);
    c.ssl.lambda_r = cfg.get_double("ssl.lambda_r", 1.0);
    c.ssl.temperature = cfg.get_double("ssl.temperature", 0.5);
    c.ssl.k_augment = cfg.get_size("ssl.k_augment", 2);
    c.ssl.mix_fraction = cfg.get_double("ssl.mix_fraction", 0.5);
    c.ssl.beta_alpha = cfg.get_double("ssl.beta_alpha", 4.0);
    const double strength = cfg.get_double("ssl.augment_strength", -1.0);
    c.ssl.augment_strength =
        strength >= 0.0 ? strength : 0.1 * c.blobs.cluster_std;

    c.mode = train_mode_from_name(
        cfg.get_string("train.mode", "dlt-slide-window"));
    c.total_epochs = cfg.get_size("train.total_epochs", 120);
    c.batch_size = cfg.get_size("train.batch_size", 128);
    c.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 1));

    c.estimator_theta = cfg.get_double("estimator.theta", 0.5);

    const std::string hard_kind = cfg.get_string("hard.kind", "erasure");
    if (hard_kind == "fgsm")
        c.hard.fgsm = true;
    else if (hard_kind != "erasure")
        throw ConfigError("hard.kind must be erasure or fgsm");
    c.hard.ratio = cfg.get_double("hard.ratio", 1.0);
    c.hard.subset_fraction = cfg.get_double("hard.subset_fraction", 0.1);
    c.hard.erase_fraction = cfg.get_double("hard.erase_fraction", 0.25);
    c.hard.fgsm_epsilon = cfg.get_double("hard.fgsm_epsilon", 0.1);

    cfg.require_all_consumed();
    c.validate();
    return c;
}

std::vector<std::size_t> epoch_permutation(std::uint64_t run_seed,
                                           std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(derive_seed(run_seed, kStreamPerm, epoch));
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

double evaluate(const MlpModel& model, const Dataset& test) {
    if (test.size() == 0) throw ContractError("evaluate: empty test set");
    Matrix probs = forward_batch(model, test.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.rows; ++i) {
        const double* p = probs.row(i);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (p[c] > p[arg]) arg = c;
        if (static_cast<int>(arg) == test.true_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double warmup_epoch(MlpModel& model, const Dataset& ds, SgdState& sgd,
                    LossLedger& ledger, std::size_t epoch,
                    std::uint64_t run_seed, std::size_t batch_size) {
    const std::vector<std::size_t> perm =
        epoch_permutation(run_seed, epoch, ds.size());
    const BatchRange range = batch_range(ds.size(), batch_size);
    double loss_sum = 0.0;
    for (std::size_t p = 0; p < range.batches; ++p) {
        const std::vector<std::size_t> ids = range.ids(perm, p);
        const Matrix X = rows_of(ds, ids);
        const Matrix Y = observed_one_hots(ds, ids);
        try {
            const Matrix probs = forward_batch(model, X);
            const std::vector<double> losses =
                per_sample_losses(probs, Y, LossKind::CrossEntropy);
            ledger.record(epoch, p, ids, losses);
            for (double l : losses) loss_sum += l;
            const std::vector<double> ones(ids.size(), 1.0);
            const Gradients grads =
                backward(model, X, Y, LossKind::CrossEntropy, ones);
            sgd_step(model, sgd, grads);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(p) + ": " + e.what());
        }
    }
    return loss_sum / static_cast<double>(ds.size());
}

DltBatch assemble_dlt_batch(const MlpModel& model, const Dataset& ds,
                            const BatchSplit& split, const SslWeights& ssl,
                            std::uint64_t run_seed, std::size_t epoch,
                            std::size_t batch_idx) {
    const std::size_t dim = ds.dim();
    const std::size_t classes = ds.class_count;
    const std::size_t k = ssl.k_augment;

    // Augmented views with observed labels (clean side) and raw views for the
    // noisy side.
    auto views_of = [&](std::size_t id) {
        const std::vector<double> x(ds.features.row(id),
                                    ds.features.row(id) + dim);
        return augment(x, k, ssl.augment_strength,
                       derive_seed(run_seed, kStreamAug, epoch, id));
    };

    Matrix clean_views(split.clean_ids.size() * k, dim);
    Matrix clean_labels(split.clean_ids.size() * k, classes, 0.0);
    for (std::size_t j = 0; j < split.clean_ids.size(); ++j) {
        const std::size_t id = split.clean_ids[j];
        const auto views = views_of(id);
        for (std::size_t v = 0; v < k; ++v) {
            std::copy(views[v].begin(), views[v].end(),
                      clean_views.row(j * k + v));
            clean_labels(j * k + v,
                         static_cast<std::size_t>(ds.observed_labels[id])) = 1.0;
        }
    }

    Matrix noisy_views(split.noisy_ids.size() * k, dim);
    for (std::size_t j = 0; j < split.noisy_ids.size(); ++j) {
        const auto views = views_of(split.noisy_ids[j]);
        for (std::size_t v = 0; v < k; ++v)
            std::copy(views[v].begin(), views[v].end(),
                      noisy_views.row(j * k + v));
    }

    // Pseudo-labels: mean prediction over each sample's views, sharpened.
    // Treated as constants; no gradient flows through this pass.
    Matrix pseudo(split.noisy_ids.size(), classes);
    if (!split.noisy_ids.empty()) {
        const Matrix probs = forward_batch(model, noisy_views);
        for (std::size_t j = 0; j < split.noisy_ids.size(); ++j) {
            std::vector<double> mean(classes, 0.0);
            for (std::size_t v = 0; v < k; ++v)
                for (std::size_t c = 0; c < classes; ++c)
                    mean[c] += probs(j * k + v, c);
            for (double& m : mean) m /= static_cast<double>(k);
            const std::vector<double> sharp = sharpen(mean, ssl.temperature);
            std::copy(sharp.begin(), sharp.end(), pseudo.row(j));
        }
    }

    Rng mix_rng = make_rng(derive_seed(run_seed, kStreamMix, epoch, batch_idx));
    DltBatch batch;

    // Clean side: mixup between clean views, the original view dominating.
    const std::size_t n_clean_views = clean_views.rows;
    if (n_clean_views > 0) {
        std::vector<std::size_t> partner(n_clean_views);
        std::iota(partner.begin(), partner.end(), 0);
        std::shuffle(partner.begin(), partner.end(), mix_rng);
        batch.clean_x = Matrix(n_clean_views, dim);
        batch.clean_y = Matrix(n_clean_views, classes);
        for (std::size_t j = 0; j < n_clean_views; ++j) {
            const double lambda = draw_mixup_lambda(mix_rng, ssl.beta_alpha);
            const std::size_t q = partner[j];
            for (std::size_t d = 0; d < dim; ++d)
                batch.clean_x(j, d) = lambda * clean_views(j, d) +
                                      (1.0 - lambda) * clean_views(q, d);
            for (std::size_t c = 0; c < classes; ++c)
                batch.clean_y(j, c) = lambda * clean_labels(j, c) +
                                      (1.0 - lambda) * clean_labels(q, c);
        }
    }

    // Noisy side: every noisy view, mixed with a chosen part of the clean
    // views when available; the clean component dominates.
    const std::size_t n_noisy_views = noisy_views.rows;
    if (n_noisy_views > 0) {
        std::size_t n_chosen = 0;
        std::vector<std::size_t> chosen;
        if (n_clean_views > 0) {
            n_chosen = static_cast<std::size_t>(std::llround(
                ssl.mix_fraction * static_cast<double>(n_clean_views)));
            if (n_chosen > 0) {
                chosen.resize(n_clean_views);
                std::iota(chosen.begin(), chosen.end(), 0);
                std::shuffle(chosen.begin(), chosen.end(), mix_rng);
                chosen.resize(n_chosen);
            }
        }
        batch.noisy_x = Matrix(n_noisy_views, dim);
        batch.noisy_y = Matrix(n_noisy_views, classes);
        for (std::size_t j = 0; j < n_noisy_views; ++j) {
            const std::size_t sample = j / k;
            if (n_chosen > 0) {
                const std::size_t q = chosen[j % n_chosen];
                const double lambda = draw_mixup_lambda(mix_rng, ssl.beta_alpha);
                for (std::size_t d = 0; d < dim; ++d)
                    batch.noisy_x(j, d) = lambda * clean_views(q, d) +
                                          (1.0 - lambda) * noisy_views(j, d);
                for (std::size_t c = 0; c < classes; ++c)
                    batch.noisy_y(j, c) = lambda * clean_labels(q, c) +
                                          (1.0 - lambda) * pseudo(sample, c);
            } else {
                for (std::size_t d = 0; d < dim; ++d)
                    batch.noisy_x(j, d) = noisy_views(j, d);
                for (std::size_t c = 0; c < classes; ++c)
                    batch.noisy_y(j, c) = pseudo(sample, c);
            }
        }
    }
    return batch;
}

EpochMetrics dlt_epoch(MlpModel& model, const Dataset& ds, SgdState& sgd,
                       LossLedger& ledger, const ThresholdPolicy& policy,
                       const SslWeights& ssl, TrainMode mode, std::size_t epoch,
                       std::uint64_t run_seed, std::size_t batch_size,
                       std::vector<std::uint8_t>* routed_clean_out) {
    if (mode == TrainMode::PlainCe)
        throw ContractError("dlt_epoch: plain-ce mode has no DLT epochs");
    if (epoch <= policy.warm_epochs)
        throw StateError("dlt_epoch: warm-up is not complete at epoch " +
                         std::to_string(epoch));

    const double q = selection_proportion(policy, epoch);
    // q = 1 is the schedule's "select everything" branch; no threshold is
    // applied at all (a stale quantile could spuriously reject a sample whose
    // loss rose since it was recorded).
    const bool select_all = q >= 1.0;
    const double tau_epoch =
        (mode == TrainMode::DltLastEpoch && !select_all)
            ? threshold_last_epoch(ledger, epoch, q)
            : 0.0;

    const std::vector<std::size_t> perm =
        epoch_permutation(run_seed, epoch, ds.size());
    const BatchRange range = batch_range(ds.size(), batch_size);

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.has_selection = true;
    metrics.q = q;
    if (routed_clean_out) routed_clean_out->assign(ds.size(), 0);

    double tau_sum = 0.0;
    for (std::size_t p = 0; p < range.batches; ++p) {
        const std::vector<std::size_t> ids = range.ids(perm, p);
        const Matrix X = rows_of(ds, ids);
        const Matrix Y = observed_one_hots(ds, ids);
        try {
            const Matrix probs = forward_batch(model, X);
            const std::vector<double> losses =
                per_sample_losses(probs, Y, LossKind::CrossEntropy);
            // The slide-window threshold reads the batches before this one;
            // record only afterwards.
            const double tau =
                select_all ? std::numeric_limits<double>::infinity()
                : mode == TrainMode::DltSlideWindow
                    ? threshold_slide_window(ledger, q, policy.window_batches)
                    : tau_epoch;
            ledger.record(epoch, p, ids, losses);
            tau_sum += tau;

            BatchSplit split;
            if (select_all) {
                split.clean_ids = ids;
                split.threshold = tau;
            } else {
                split = split_batch(ids, losses, tau);
            }
            for (std::size_t id : split.clean_ids) {
                metrics.routed_clean[provenance_index(ds.provenance[id])]++;
                if (routed_clean_out) (*routed_clean_out)[id] = 1;
            }
            for (std::size_t id : split.noisy_ids)
                metrics.routed_noisy[provenance_index(ds.provenance[id])]++;

            if (split.clean_ids.empty())
                std::fprintf(stderr,
                             "warning: epoch %zu batch %zu: empty clean set; "
                             "skipping clean loss\n",
                             epoch, p);

            const DltBatch assembled = assemble_dlt_batch(
                model, ds, split, ssl, run_seed, epoch, p);

            Gradients grads = Gradients::zeros_like(model);
            if (assembled.clean_x.rows > 0) {
                const std::vector<double> ones(assembled.clean_x.rows, 1.0);
                grads.add_scaled(backward(model, assembled.clean_x,
                                          assembled.clean_y,
                                          LossKind::CrossEntropy, ones),
                                 1.0);
            }
            if (assembled.noisy_x.rows > 0 && ssl.lambda_n > 0.0) {
                const std::vector<double> ones(assembled.noisy_x.rows, 1.0);
                grads.add_scaled(backward(model, assembled.noisy_x,
                                          assembled.noisy_y,
                                          LossKind::MeanSquaredError, ones),
                                 ssl.lambda_n);
            }
            if (ssl.lambda_r > 0.0) {
                const Matrix all_x = vstack(assembled.clean_x, assembled.noisy_x);
                if (all_x.rows > 0)
                    grads.add_scaled(backward_uniform_reg(model, all_x),
                                     ssl.lambda_r);
            }
            sgd_step(model, sgd, grads);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(p) + ": " + e.what());
        }
    }

    metrics.tau_mean = tau_sum / static_cast<double>(range.batches);
    const std::vector<double>& epoch_losses = ledger.epoch_losses(epoch);
    metrics.train_loss =
        std::accumulate(epoch_losses.begin(), epoch_losses.end(), 0.0) /
        static_cast<double>(epoch_losses.size());

    std::size_t truly_clean = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.observed_labels[i] == ds.true_labels[i]) ++truly_clean;
    const std::size_t tp = metrics.routed_clean[0] + metrics.routed_clean[2] +
                           metrics.routed_clean[3];
    const std::size_t selected = metrics.routed_clean[0] +
                                 metrics.routed_clean[1] +
                                 metrics.routed_clean[2] +
                                 metrics.routed_clean[3];
    metrics.selection_precision =
        selected > 0 ? static_cast<double>(tp) / static_cast<double>(selected)
                     : 0.0;
    metrics.selection_recall =
        truly_clean > 0
            ? static_cast<double>(tp) / static_cast<double>(truly_clean)
            : 0.0;
    return metrics;
}

TrainTestSplit build_data(const TrainConfig& config) {
    config.validate();
    TrainTestSplit split;
    if (config.dataset_path.empty()) {
        split = generate_blob_pair(config.blobs, config.test_fraction,
                                   derive_seed(config.seed, kStreamData));
    } else {
        Dataset full = load_dataset_csv(config.dataset_path);
        // Seeded shuffled split for file datasets.
        std::vector<std::size_t> perm(full.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng = make_rng(derive_seed(config.seed, kStreamFileSplit));
        std::shuffle(perm.begin(), perm.end(), rng);
        const std::size_t n_test = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(
                   config.test_fraction * static_cast<double>(full.size()))));
        if (n_test >= full.size())
            throw ContractError("build_data: file dataset too small to split");
        auto take = [&full](const std::vector<std::size_t>& ids) {
            Dataset out;
            out.class_count = full.class_count;
            out.features = Matrix(ids.size(), full.dim());
            for (std::size_t j = 0; j < ids.size(); ++j) {
                std::copy(full.features.row(ids[j]),
                          full.features.row(ids[j]) + full.dim(),
                          out.features.row(j));
                out.observed_labels.push_back(full.observed_labels[ids[j]]);
                out.true_labels.push_back(full.true_labels[ids[j]]);
                out.provenance.push_back(full.provenance[ids[j]]);
            }
            return out;
        };
        split.train = take(std::vector<std::size_t>(perm.begin(),
                                                    perm.end() - n_test));
        split.test =
            take(std::vector<std::size_t>(perm.end() - n_test, perm.end()));
    }

    if (config.noise.kind == NoiseKind::Symmetric)
        inject_symmetric_noise(split.train, config.noise.rate,
                               derive_seed(config.seed, kStreamNoise));
    else if (config.noise.kind == NoiseKind::Asymmetric)
        inject_asymmetric_noise(split.train, config.noise.rate,
                                config.noise.class_map,
                                derive_seed(config.seed, kStreamNoise));
    return split;
}

RunArtifact train_on(const TrainConfig& config, Dataset train_data,
                     Dataset test_data) {
    config.validate();
    train_data.validate();
    if (train_data.size() == 0) throw ContractError("train: empty training set");

    // Resolve the schedule's noise rate w.
    double rate_used = 0.0;
    std::optional<double> estimated;
    if (config.mode != TrainMode::PlainCe) {
        switch (config.rate_source) {
            case RateSource::True:
                rate_used =
                    config.noise.kind == NoiseKind::None ? 0.0 : config.noise.rate;
                break;
            case RateSource::Manual:
                rate_used = config.manual_rate;
                break;
            case RateSource::Estimated: {
                TrainConfig est_config = config;
                est_config.mode = TrainMode::PlainCe;
                est_config.rate_source = RateSource::Manual;
                est_config.manual_rate = 0.0;
                est_config.seed = derive_seed(config.seed, kStreamEstimator);
                RunArtifact pass = train_on(est_config, train_data, test_data);
                NoiseEstimate est = estimate_noise_from_ledger(
                    pass.ledger, est_config.total_epochs, config.estimator_theta);
                rate_used = est.estimation.estimated_rate;
                estimated = rate_used;
                break;
            }
        }
    }

    ThresholdPolicy policy = config.policy;
    policy.noise_rate = rate_used;

    RunArtifact artifact{
        make_mlp(train_data.dim(), config.hidden, train_data.class_count,
                 derive_seed(config.seed, kStreamModel)),
        {},
        LossLedger(train_data.size(), policy.window_batches),
        {},
        {},
        config.mode,
        rate_used,
        estimated,
        {},
        0.0,
        0.0,
        0};
    SgdState sgd = SgdState::init(artifact.model, config.optimizer.lr,
                                  config.optimizer.momentum,
                                  config.optimizer.weight_decay);
    const std::uint64_t run_seed = derive_seed(config.seed, kStreamRun);

    std::vector<std::uint8_t> routed;
    for (std::size_t epoch = 1; epoch <= config.total_epochs; ++epoch) {
        if (config.optimizer.lr_drop_epoch > 0 &&
            epoch == config.optimizer.lr_drop_epoch)
            sgd.learning_rate *= config.optimizer.lr_drop_factor;

        EpochMetrics row;
        if (config.mode == TrainMode::PlainCe ||
            epoch <= policy.warm_epochs) {
            row.epoch = epoch;
            row.train_loss =
                warmup_epoch(artifact.model, train_data, sgd, artifact.ledger,
                             epoch, run_seed, config.batch_size);
        } else {
            row = dlt_epoch(artifact.model, train_data, sgd, artifact.ledger,
                            policy, config.ssl, config.mode, epoch, run_seed,
                            config.batch_size, &routed);
        }
        row.test_accuracy = evaluate(artifact.model, test_data);
        artifact.metrics.push_back(row);
    }

    artifact.final_routed_clean = std::move(routed);
    artifact.final_test_accuracy = artifact.metrics.back().test_accuracy;
    for (const EpochMetrics& row : artifact.metrics) {
        if (row.test_accuracy > artifact.best_test_accuracy) {
            artifact.best_test_accuracy = row.test_accuracy;
            artifact.best_epoch = row.epoch;
        }
    }
    artifact.train_data = std::move(train_data);
    artifact.test_data = std::move(test_data);
    return artifact;
}

RunArtifact train(const TrainConfig& config) {
    TrainTestSplit split = build_data(config);
    return train_on(config, std::move(split.train), std::move(split.test));
}

NoiseEstimate estimate_noise_from_ledger(const LossLedger& ledger,
                                         std::size_t total_epochs,
                                         double theta) {
    if (total_epochs < 2)
        throw ContractError("estimate_noise: need at least 2 epochs");
    NoiseEstimate est;
    est.early_epoch = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(0.10 * static_cast<double>(total_epochs))));
    est.late_epoch = total_epochs;
    const std::vector<double> diffs =
        loss_difference(ledger, est.early_epoch, est.late_epoch);
    est.estimation = estimate_noise_rate(diffs, theta);
    return est;
}

NoiseEstimate run_noise_estimation(const TrainConfig& config, double theta) {
    TrainConfig pass_config = config;
    pass_config.mode = TrainMode::PlainCe;
    RunArtifact artifact = train(pass_config);
    return estimate_noise_from_ledger(artifact.ledger,
                                      pass_config.total_epochs, theta);
}

HardStudyReport run_hard_sample_study(const TrainConfig& config,
                                      const MlpModel* attack_model) {
    TrainTestSplit base = build_data(config);
    const std::size_t n = base.train.size();
    const std::size_t hard_count = static_cast<std::size_t>(std::llround(
        config.hard.ratio * config.hard.subset_fraction *
        static_cast<double>(n)));

    Dataset augmented = base.train;
    if (hard_count > 0) {
        if (config.hard.fgsm) {
            if (!attack_model)
                throw StateError(
                    "hard-study: FGSM hard samples need a pre-trained attack "
                    "model");
            append_hard_fgsm(augmented, *attack_model, hard_count,
                             config.hard.fgsm_epsilon,
                             derive_seed(config.seed, kStreamHard));
        } else {
            append_hard_erasure(augmented, hard_count,
                                config.hard.erase_fraction,
                                derive_seed(config.seed, kStreamHard));
        }
    }

    HardStudyReport report;
    report.hard_count = hard_count;

    // Plain-CE run: per-provenance mean loss trajectories.
    TrainConfig plain_config = config;
    plain_config.mode = TrainMode::PlainCe;
    RunArtifact plain =
        train_on(plain_config, augmented, base.test);
    for (std::size_t epoch = 1; epoch <= plain_config.total_epochs; ++epoch) {
        const std::vector<double>& losses = plain.ledger.epoch_losses(epoch);
        double sum_clean = 0.0, sum_noisy = 0.0, sum_hard = 0.0;
        std::size_t n_clean = 0, n_noisy = 0, n_hard = 0;
        for (std::size_t i = 0; i < losses.size(); ++i) {
            switch (plain.train_data.provenance[i]) {
                case Provenance::Clean:
                    sum_clean += losses[i];
                    ++n_clean;
                    break;
                case Provenance::Noisy:
                    sum_noisy += losses[i];
                    ++n_noisy;
                    break;
                default:
                    sum_hard += losses[i];
                    ++n_hard;
                    break;
            }
        }
        report.mean_loss_clean.push_back(
            n_clean ? sum_clean / static_cast<double>(n_clean) : 0.0);
        report.mean_loss_noisy.push_back(
            n_noisy ? sum_noisy / static_cast<double>(n_noisy) : 0.0);
        report.mean_loss_hard.push_back(
            n_hard ? sum_hard / static_cast<double>(n_hard) : 0.0);
    }
    double d_clean = 0.0, d_noisy = 0.0;
    for (std::size_t t = 0; t < report.mean_loss_hard.size(); ++t) {
        const double dc = report.mean_loss_hard[t] - report.mean_loss_clean[t];
        const double dn = report.mean_loss_hard[t] - report.mean_loss_noisy[t];
        d_clean += dc * dc;
        d_noisy += dn * dn;
    }
    report.l2_hard_to_clean = std::sqrt(d_clean);
    report.l2_hard_to_noisy = std::sqrt(d_noisy);
    report.plain_metrics = plain.metrics;

    // DLT run on the same data: final-epoch routing of the hard samples.
    TrainConfig dlt_config = config;
    if (dlt_config.mode == TrainMode::PlainCe)
        dlt_config.mode = TrainMode::DltSlideWindow;
    RunArtifact dlt = train_on(dlt_config, std::move(augmented),
                               std::move(base.test));
    std::size_t hard_clean = 0, hard_total = 0;
    for (std::size_t i = 0; i < dlt.train_data.size(); ++i) {
        const Provenance p = dlt.train_data.provenance[i];
        if (p == Provenance::HardErasure || p == Provenance::HardAdversarial) {
            ++hard_total;
            if (!dlt.final_routed_clean.empty() && dlt.final_routed_clean[i])
                ++hard_clean;
        }
    }
    report.hard_routed_clean_fraction =
        hard_total ? static_cast<double>(hard_clean) /
                         static_cast<double>(hard_total)
                   : 0.0;
    report.dlt_metrics = dlt.metrics;
    return report;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           std::uint64_t config_seed) {
    if (flag_seed) return *flag_seed;
    if (const char* env = std::getenv("DLT_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError("DLT_SEED is not an integer: " + std::string(env));
        return static_cast<std::uint64_t>(v);
    }
    return config_seed;
}

} // namespace dlt
