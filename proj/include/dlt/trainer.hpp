#pragma once

#include "dlt/config.hpp"
#include "dlt/dataset.hpp"
#include "dlt/gmm.hpp"
#include "dlt/loss_ledger.hpp"
#include "dlt/metrics.hpp"
#include "dlt/mlp.hpp"
#include "dlt/ssl.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dlt {

enum class TrainMode { DltLastEpoch, DltSlideWindow, PlainCe };
enum class NoiseKind { None, Symmetric, Asymmetric };
enum class RateSource { True, Estimated, Manual };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Symmetric;
    double rate = 0.4;
    std::vector<int> class_map;  // asymmetric only
};

struct OptimizerConfig {
    double lr = 0.02;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t lr_drop_epoch = 60;  // 0 disables; epochs >= this use dropped lr
    double lr_drop_factor = 0.1;
};

struct HardStudyConfig {
    bool fgsm = false;            // erasure otherwise
    double ratio = 1.0;           // hard count = ratio * subset_fraction * N
    double subset_fraction = 0.1;
    double erase_fraction = 0.25;
    double fgsm_epsilon = 0.1;
};

struct TrainConfig {
    BlobParams blobs{1000, 4, 16, 5.0, 1.0};
    double test_fraction = 0.2;
    std::string dataset_path;  // when set, load this file instead of blobs
    NoiseSpec noise;
    std::vector<std::size_t> hidden{64, 64};
    OptimizerConfig optimizer;
    ThresholdPolicy policy;
    RateSource rate_source = RateSource::True;
    double manual_rate = 0.0;
    SslWeights ssl;
    TrainMode mode = TrainMode::DltSlideWindow;
    std::size_t total_epochs = 120;
    std::size_t batch_size = 128;
    std::uint64_t seed = 1;
    double estimator_theta = 0.5;
    HardStudyConfig hard;

    void validate() const;

    // Reads every recognized key and rejects unknown ones.
    static TrainConfig from_config(ConfigFile& cfg);
};

// Seeded per-epoch batch order shared by every training mode.
std::vector<std::size_t> epoch_permutation(std::uint64_t run_seed,
                                           std::size_t epoch, std::size_t n);

// Augmented, pseudo-labeled, and mixed tensors for one DLT batch. Kept as a
// standalone step so the loss composition can be checked against a manual
// recomputation.
struct DltBatch {
    Matrix clean_x;  // mixed clean views (clean-with-clean)
    Matrix clean_y;
    Matrix noisy_x;  // mixed noisy views (clean-with-noisy, pseudo-labeled)
    Matrix noisy_y;
};

DltBatch assemble_dlt_batch(const MlpModel& model, const Dataset& ds,
                            const BatchSplit& split, const SslWeights& ssl,
                            std::uint64_t run_seed, std::size_t epoch,
                            std::size_t batch_idx);

// Fraction of argmax predictions matching the true labels.
double evaluate(const MlpModel& model, const Dataset& test);

// One standard cross-entropy pass over all data (warm-up and plain-CE
// epochs); records every per-sample loss. Returns the mean recorded loss.
double warmup_epoch(MlpModel& model, const Dataset& ds, SgdState& sgd,
                    LossLedger& ledger, std::size_t epoch,
                    std::uint64_t run_seed, std::size_t batch_size);

// One thresholded semi-supervised epoch. When routed_clean_out is non-null it
// receives one flag per sample (1 = sent to the clean side this epoch).
EpochMetrics dlt_epoch(MlpModel& model, const Dataset& ds, SgdState& sgd,
                       LossLedger& ledger, const ThresholdPolicy& policy,
                       const SslWeights& ssl, TrainMode mode, std::size_t epoch,
                       std::uint64_t run_seed, std::size_t batch_size,
                       std::vector<std::uint8_t>* routed_clean_out = nullptr);

struct RunArtifact {
    MlpModel model;
    std::vector<EpochMetrics> metrics;
    LossLedger ledger;
    Dataset train_data;
    Dataset test_data;
    TrainMode mode = TrainMode::PlainCe;
    double noise_rate_used = 0.0;
    std::optional<double> estimated_rate;
    std::vector<std::uint8_t> final_routed_clean;  // DLT modes only
    double final_test_accuracy = 0.0;
    double best_test_accuracy = 0.0;
    std::size_t best_epoch = 0;
};

// Dataset construction exactly as `train` performs it (generation or file
// load, then noise injection).
TrainTestSplit build_data(const TrainConfig& config);

// Full run on pre-built data (no noise injection here).
RunArtifact train_on(const TrainConfig& config, Dataset train_data,
                     Dataset test_data);

// Build data per config, then run.
RunArtifact train(const TrainConfig& config);

struct NoiseEstimate {
    EstimationResult estimation;
    std::size_t early_epoch = 0;
    std::size_t late_epoch = 0;
};

// Loss differences between the 10%-of-total epoch and the last one of a
// finished run, fed to the mixture estimator.
NoiseEstimate estimate_noise_from_ledger(const LossLedger& ledger,
                                         std::size_t total_epochs, double theta);

// Plain-CE pass plus estimator.
NoiseEstimate run_noise_estimation(const TrainConfig& config, double theta);

struct HardStudyReport {
    std::size_t hard_count = 0;
    // Per-epoch mean recorded loss of each provenance group (plain-CE run).
    std::vector<double> mean_loss_clean;
    std::vector<double> mean_loss_noisy;
    std::vector<double> mean_loss_hard;
    double l2_hard_to_clean = 0.0;
    double l2_hard_to_noisy = 0.0;
    // Share of hard samples on the clean side at the final DLT epoch.
    double hard_routed_clean_fraction = 0.0;
    std::vector<EpochMetrics> plain_metrics;
    std::vector<EpochMetrics> dlt_metrics;
};

// Plain-CE trajectory run plus a DLT routing run on the same hard-augmented
// dataset. attack_model is required for FGSM hard samples.
HardStudyReport run_hard_sample_study(const TrainConfig& config,
                                      const MlpModel* attack_model = nullptr);

// Seed precedence: explicit flag, then the DLT_SEED environment variable,
// then the config-file value.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           std::uint64_t config_seed);

} // namespace dlt
