#pragma once

#include "dlt/matrix.hpp"
#include "dlt/mlp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dlt {

enum class Provenance : std::uint8_t {
    Clean = 0,
    Noisy = 1,
    HardErasure = 2,
    HardAdversarial = 3,
};

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// Labeled samples with hidden ground truth. true_labels and provenance exist
// for evaluation only; training code must not read them.
struct Dataset {
    Matrix features;                   // N x dim
    std::vector<int> observed_labels;  // class ids
    std::vector<int> true_labels;
    std::vector<Provenance> provenance;
    std::size_t class_count = 0;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    std::vector<double> observed_one_hot(std::size_t i) const;
    std::vector<double> true_one_hot(std::size_t i) const;

    // Fraction of samples whose observed label disagrees with the truth.
    double disagreement_fraction() const;

    // Enforces label ranges, array sizes, and the provenance consistency rule
    // (noisy iff observed != true; hard samples keep observed == true).
    void validate() const;
};

struct BlobParams {
    std::size_t n_per_class = 0;
    std::size_t classes = 0;
    std::size_t dim = 0;
    double center_spread = 5.0;
    double cluster_std = 1.0;
};

// Seeded Gaussian clusters; all samples clean, observed == true.
Dataset generate_blobs(const BlobParams& params, std::uint64_t seed);

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

// Train and test sets drawn around the same seeded cluster centers.
TrainTestSplit generate_blob_pair(const BlobParams& params, double test_fraction,
                                  std::uint64_t seed);

// Redraw labels of a seeded rate-fraction of samples uniformly over all
// classes (the true label may be redrawn unchanged).
void inject_symmetric_noise(Dataset& ds, double rate, std::uint64_t seed);

// Flip a seeded rate-fraction per class to class_map[true label].
void inject_asymmetric_noise(Dataset& ds, double rate,
                             const std::vector<int>& class_map,
                             std::uint64_t seed);

// k jittered copies of x (Gaussian, scale = strength).
std::vector<std::vector<double>> augment(const std::vector<double>& x,
                                         std::size_t k, double strength,
                                         std::uint64_t seed);

// Zero a seeded random subset of ceil(erase_fraction * dim) coordinates.
std::vector<double> make_hard_erasure(const std::vector<double>& x,
                                      double erase_fraction, std::uint64_t seed);

// x + epsilon * sign(d CE(model(x), y) / dx), with sign(0) = 0.
std::vector<double> make_hard_fgsm(const MlpModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& one_hot,
                                   double epsilon);

// Append hard variants of `count` seeded-randomly-chosen clean samples.
// count == 0 leaves the dataset untouched and consumes no randomness.
void append_hard_erasure(Dataset& ds, std::size_t count, double erase_fraction,
                         std::uint64_t seed);
void append_hard_fgsm(Dataset& ds, const MlpModel& model, std::size_t count,
                      double epsilon, std::uint64_t seed);

// Exact round-trip serialization (text and binary).
void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);
void save_dataset_binary(const Dataset& ds, const std::string& path);
Dataset load_dataset_binary(const std::string& path);

} // namespace dlt
