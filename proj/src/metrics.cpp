#include "dlt/metrics.hpp"

#include "dlt/errors.hpp"

#include <cstdio>
#include <fstream>

namespace dlt {

std::string metrics_csv_header() {
    return "epoch,train_loss,test_accuracy,q,tau_mean,selection_precision,"
           "selection_recall,clean_from_clean,clean_from_noisy,"
           "clean_from_hard_erasure,clean_from_hard_adversarial,"
           "noisy_from_clean,noisy_from_noisy,noisy_from_hard_erasure,"
           "noisy_from_hard_adversarial";
}

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& rows) {
    std::ofstream os(path);
    if (!os) throw StateError("write_metrics_csv: cannot open " + path);
    os << metrics_csv_header() << "\n";
    char buf[32];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    for (const EpochMetrics& r : rows) {
        os << r.epoch << "," << num(r.train_loss) << ","
           << num(r.test_accuracy) << ",";
        if (r.has_selection) {
            os << num(r.q) << "," << num(r.tau_mean) << ","
               << num(r.selection_precision) << "," << num(r.selection_recall);
            for (std::size_t p = 0; p < 4; ++p) os << "," << r.routed_clean[p];
            for (std::size_t p = 0; p < 4; ++p) os << "," << r.routed_noisy[p];
        } else {
            os << ",,,,,,,,,,,";
        }
        os << "\n";
    }
    if (!os) throw StateError("write_metrics_csv: write failed for " + path);
}

} // namespace dlt
