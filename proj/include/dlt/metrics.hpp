#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace dlt {

// One metrics row per epoch. Selection fields hold values only for DLT epochs
// past warm-up; other epochs leave them empty in the CSV. Routing counts are
// indexed by Provenance (clean, noisy, hard-erasure, hard-adversarial).
struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    bool has_selection = false;
    double q = 1.0;
    double tau_mean = 0.0;
    double selection_precision = 0.0;
    double selection_recall = 0.0;
    std::array<std::size_t, 4> routed_clean{};
    std::array<std::size_t, 4> routed_noisy{};
};

std::string metrics_csv_header();

// Stable schema across modes; deterministic formatting (%.17g).
void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& rows);

} // namespace dlt
