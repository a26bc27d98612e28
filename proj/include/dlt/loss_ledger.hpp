#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

namespace dlt {

enum class ThresholdStrategy { LastEpoch, SlideWindow };

// Schedule and threshold knobs. `noise_rate` is the w of the selection
// schedule, whether known, estimated, or set by hand.
struct ThresholdPolicy {
    ThresholdStrategy strategy = ThresholdStrategy::SlideWindow;
    std::size_t window_batches = 16;  // s
    double noise_rate = 0.0;          // w
    std::size_t warm_epochs = 10;     // T_warm
    std::size_t grad_epochs = 40;     // T_grad

    void validate() const;
};

// Per-sample loss history: a per-epoch table plus a ring buffer of the most
// recent batches. Epochs are 1-based. Single writer; reads may run between
// writes.
class LossLedger {
public:
    struct WindowEntry {
        std::size_t epoch = 0;
        std::size_t batch = 0;
        std::vector<std::size_t> sample_ids;
        std::vector<double> losses;
    };

    LossLedger(std::size_t n_samples, std::size_t window_capacity);

    // Stores one batch worth of losses in the epoch table and the window.
    void record(std::size_t epoch, std::size_t batch_idx,
                const std::vector<std::size_t>& sample_ids,
                const std::vector<double>& losses);

    std::size_t n_samples() const { return n_samples_; }
    std::size_t window_capacity() const { return window_capacity_; }
    const std::deque<WindowEntry>& window() const { return window_; }

    bool has_epoch(std::size_t epoch) const;
    bool epoch_complete(std::size_t epoch) const;

    // Full per-sample loss array of a finished epoch (indexed by sample id).
    const std::vector<double>& epoch_losses(std::size_t epoch) const;

    // CSV dump: epoch,batch,sample_id,loss ordered by (epoch, batch, id).
    void dump_csv(const std::string& path) const;

private:
    struct EpochRecord {
        std::vector<double> losses;
        std::vector<std::int32_t> batch_of;
        std::size_t filled = 0;
    };

    std::size_t n_samples_;
    std::size_t window_capacity_;
    std::map<std::size_t, EpochRecord> epochs_;
    std::deque<WindowEntry> window_;
};

// Nearest-rank quantile: the ceil(q*n)-th smallest value; q = 0 gives the
// smallest. Always returns an element of `values`.
double quantile(const std::vector<double>& values, double q);

// Eq.-style thresholds over recorded losses.
double threshold_last_epoch(const LossLedger& ledger, std::size_t epoch,
                            double q);
// Quantile over the most recent min(s, available) window batches.
double threshold_slide_window(const LossLedger& ledger, double q, std::size_t s);

// Decreasing selection proportion: 1 during warm-up, linear decay to 1 - w
// over grad_epochs, then constant.
double selection_proportion(const ThresholdPolicy& policy, std::size_t epoch);

// Per-sample early-epoch loss minus late-epoch loss.
std::vector<double> loss_difference(const LossLedger& ledger,
                                    std::size_t early_epoch,
                                    std::size_t late_epoch);

} // namespace dlt
