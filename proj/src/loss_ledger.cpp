#include "dlt/loss_ledger.hpp"

#include "dlt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

namespace dlt {

void ThresholdPolicy::validate() const {
    if (window_batches == 0)
        throw ContractError("policy: window_batches must be >= 1");
    if (noise_rate < 0.0 || noise_rate >= 1.0)
        throw ContractError("policy: noise_rate must be in [0,1)");
    if (warm_epochs == 0) throw ContractError("policy: warm_epochs must be >= 1");
    if (grad_epochs == 0) throw ContractError("policy: grad_epochs must be >= 1");
}

LossLedger::LossLedger(std::size_t n_samples, std::size_t window_capacity)
    : n_samples_(n_samples), window_capacity_(window_capacity) {
    if (n_samples == 0) throw ContractError("ledger: n_samples must be >= 1");
    if (window_capacity == 0)
        throw ContractError("ledger: window capacity must be >= 1");
}

void LossLedger::record(std::size_t epoch, std::size_t batch_idx,
                        const std::vector<std::size_t>& sample_ids,
                        const std::vector<double>& losses) {
    if (sample_ids.size() != losses.size())
        throw ShapeError("ledger.record: ids and losses differ in length");
    if (sample_ids.empty()) throw ContractError("ledger.record: empty batch");

    std::unordered_set<std::size_t> seen;
    for (std::size_t j = 0; j < sample_ids.size(); ++j) {
        const std::size_t id = sample_ids[j];
        if (id >= n_samples_)
            throw ContractError("ledger.record: sample_id " + std::to_string(id) +
                                " out of range");
        if (!seen.insert(id).second)
            throw ContractError("ledger.record: duplicate sample_id " +
                                std::to_string(id) + " in batch");
        if (!std::isfinite(losses[j]))
            throw NumericError("ledger.record: non-finite loss for sample_id " +
                               std::to_string(id));
        if (losses[j] < 0.0)
            throw ContractError("ledger.record: negative loss for sample_id " +
                                std::to_string(id));
    }

    EpochRecord& rec = epochs_[epoch];
    if (rec.losses.empty()) {
        rec.losses.assign(n_samples_, 0.0);
        rec.batch_of.assign(n_samples_, -1);
    }
    for (std::size_t j = 0; j < sample_ids.size(); ++j) {
        const std::size_t id = sample_ids[j];
        if (rec.batch_of[id] != -1)
            throw ContractError("ledger.record: sample_id " + std::to_string(id) +
                                " recorded twice in epoch " +
                                std::to_string(epoch));
        rec.losses[id] = losses[j];
        rec.batch_of[id] = static_cast<std::int32_t>(batch_idx);
        ++rec.filled;
    }

    window_.push_back(WindowEntry{epoch, batch_idx, sample_ids, losses});
    while (window_.size() > window_capacity_) window_.pop_front();
}

bool LossLedger::has_epoch(std::size_t epoch) const {
    return epochs_.count(epoch) != 0;
}

bool LossLedger::epoch_complete(std::size_t epoch) const {
    auto it = epochs_.find(epoch);
    return it != epochs_.end() && it->second.filled == n_samples_;
}

const std::vector<double>& LossLedger::epoch_losses(std::size_t epoch) const {
    auto it = epochs_.find(epoch);
    if (it == epochs_.end() || it->second.filled != n_samples_)
        throw StateError("ledger: epoch " + std::to_string(epoch) +
                         " is not complete");
    return it->second.losses;
}

void LossLedger::dump_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw StateError("ledger.dump_csv: cannot open " + path);
    os << "epoch,batch,sample_id,loss\n";
    char buf[32];
    for (const auto& [epoch, rec] : epochs_) {
        std::vector<std::size_t> order;
        order.reserve(rec.filled);
        for (std::size_t id = 0; id < n_samples_; ++id)
            if (rec.batch_of[id] != -1) order.push_back(id);
        std::stable_sort(order.begin(), order.end(),
                         [&rec](std::size_t a, std::size_t b) {
                             return rec.batch_of[a] < rec.batch_of[b];
                         });
        for (std::size_t id : order) {
            std::snprintf(buf, sizeof(buf), "%.17g", rec.losses[id]);
            os << epoch << "," << rec.batch_of[id] << "," << id << "," << buf
               << "\n";
        }
    }
    if (!os) throw StateError("ledger.dump_csv: write failed for " + path);
}

double quantile(const std::vector<double>& values, double q) {
    if (values.empty()) throw ContractError("quantile: empty input");
    if (q < 0.0 || q > 1.0) throw ContractError("quantile: q must be in [0,1]");
    const std::size_t n = values.size();
    std::size_t rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n)));
    if (rank == 0) rank = 1;
    if (rank > n) rank = n;
    std::vector<double> copy = values;
    std::nth_element(copy.begin(), copy.begin() + (rank - 1), copy.end());
    return copy[rank - 1];
}

double threshold_last_epoch(const LossLedger& ledger, std::size_t epoch,
                            double q) {
    if (epoch < 2 || !ledger.epoch_complete(epoch - 1))
        throw StateError("threshold_last_epoch: epoch " +
                         std::to_string(epoch ? epoch - 1 : 0) +
                         " is not complete");
    return quantile(ledger.epoch_losses(epoch - 1), q);
}

double threshold_slide_window(const LossLedger& ledger, double q,
                              std::size_t s) {
    if (s == 0) throw ContractError("threshold_slide_window: s must be >= 1");
    const auto& window = ledger.window();
    if (window.empty())
        throw StateError("threshold_slide_window: no batches recorded yet");
    const std::size_t take = std::min(s, window.size());
    std::vector<double> pooled;
    for (std::size_t k = window.size() - take; k < window.size(); ++k)
        pooled.insert(pooled.end(), window[k].losses.begin(),
                      window[k].losses.end());
    return quantile(pooled, q);
}

double selection_proportion(const ThresholdPolicy& policy, std::size_t epoch) {
    if (epoch == 0) throw ContractError("selection_proportion: epochs are 1-based");
    policy.validate();
    if (epoch <= policy.warm_epochs) return 1.0;
    if (epoch <= policy.warm_epochs + policy.grad_epochs) {
        const double progress =
            static_cast<double>(epoch - policy.warm_epochs) /
            static_cast<double>(policy.grad_epochs);
        return 1.0 - policy.noise_rate * progress;
    }
    return 1.0 - policy.noise_rate;
}

std::vector<double> loss_difference(const LossLedger& ledger,
                                    std::size_t early_epoch,
                                    std::size_t late_epoch) {
    const std::vector<double>& early = ledger.epoch_losses(early_epoch);
    const std::vector<double>& late = ledger.epoch_losses(late_epoch);
    std::vector<double> diff(early.size());
    for (std::size_t i = 0; i < early.size(); ++i) diff[i] = early[i] - late[i];
    return diff;
}

} // namespace dlt
