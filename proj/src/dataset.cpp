#include "dlt/dataset.hpp"

#include "dlt/errors.hpp"
#include "dlt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dlt {

namespace {

// Seed-stream tags so the per-purpose generators never collide.
enum : std::uint64_t {
    kStreamCenters = 0xC0,
    kStreamSamples = 0xC1,
    kStreamTestSamples = 0xC2,
    kStreamSymSelect = 0xA0,
    kStreamSymRedraw = 0xA1,
    kStreamAsymSelect = 0xB0,
    kStreamHardSelect = 0xE0,
    kStreamHardApply = 0xE1,
};

std::vector<double> one_hot_of(int label, std::size_t classes) {
    std::vector<double> y(classes, 0.0);
    y[static_cast<std::size_t>(label)] = 1.0;
    return y;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    std::shuffle(idx.begin(), idx.end(), rng);
}

double sq_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Uniform centers in the spread box, re-drawn while two land closer than
// 4 cluster standard deviations (capped so the draw always terminates).
Matrix draw_centers(const BlobParams& params, std::uint64_t seed) {
    Matrix centers(params.classes, params.dim);
    Rng rng = make_rng(derive_seed(seed, kStreamCenters));
    std::uniform_real_distribution<double> dist(-params.center_spread,
                                                params.center_spread);
    const double min_sq = 16.0 * params.cluster_std * params.cluster_std;
    for (std::size_t c = 0; c < params.classes; ++c) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (std::size_t d = 0; d < params.dim; ++d)
                centers(c, d) = dist(rng);
            bool ok = true;
            for (std::size_t prev = 0; prev < c; ++prev)
                if (sq_distance(centers.row(c), centers.row(prev), params.dim) <
                    min_sq) {
                    ok = false;
                    break;
                }
            if (ok) break;
        }
    }
    return centers;
}

Dataset sample_around_centers(const Matrix& centers, const BlobParams& params,
                              std::size_t n_per_class, std::uint64_t seed,
                              std::uint64_t stream) {
    Dataset ds;
    ds.class_count = params.classes;
    const std::size_t n = n_per_class * params.classes;
    ds.features = Matrix(n, params.dim);
    ds.observed_labels.resize(n);
    ds.true_labels.resize(n);
    ds.provenance.assign(n, Provenance::Clean);
    for (std::size_t c = 0; c < params.classes; ++c) {
        for (std::size_t j = 0; j < n_per_class; ++j) {
            const std::size_t i = c * n_per_class + j;
            Rng rng = make_rng(derive_seed(seed, stream, i));
            std::normal_distribution<double> noise(0.0, params.cluster_std);
            double* x = ds.features.row(i);
            for (std::size_t d = 0; d < params.dim; ++d)
                x[d] = centers(c, d) + noise(rng);
            ds.observed_labels[i] = static_cast<int>(c);
            ds.true_labels[i] = static_cast<int>(c);
        }
    }
    return ds;
}

} // namespace

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Clean: return "clean";
        case Provenance::Noisy: return "noisy";
        case Provenance::HardErasure: return "hard-erasure";
        case Provenance::HardAdversarial: return "hard-adversarial";
    }
    return "unknown";
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "clean") return Provenance::Clean;
    if (name == "noisy") return Provenance::Noisy;
    if (name == "hard-erasure") return Provenance::HardErasure;
    if (name == "hard-adversarial") return Provenance::HardAdversarial;
    throw ContractError("unknown provenance tag: " + name);
}

std::vector<double> Dataset::observed_one_hot(std::size_t i) const {
    return one_hot_of(observed_labels[i], class_count);
}

std::vector<double> Dataset::true_one_hot(std::size_t i) const {
    return one_hot_of(true_labels[i], class_count);
}

double Dataset::disagreement_fraction() const {
    if (size() == 0) return 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i)
        if (observed_labels[i] != true_labels[i]) ++n;
    return static_cast<double>(n) / static_cast<double>(size());
}

void Dataset::validate() const {
    const std::size_t n = size();
    if (observed_labels.size() != n || true_labels.size() != n ||
        provenance.size() != n)
        throw ShapeError("dataset: parallel arrays disagree on N");
    for (std::size_t i = 0; i < n; ++i) {
        if (observed_labels[i] < 0 ||
            observed_labels[i] >= static_cast<int>(class_count) ||
            true_labels[i] < 0 || true_labels[i] >= static_cast<int>(class_count))
            throw ContractError("dataset: label out of range at sample " +
                                std::to_string(i));
        const bool disagrees = observed_labels[i] != true_labels[i];
        if (disagrees != (provenance[i] == Provenance::Noisy))
            throw ContractError("dataset: provenance inconsistent at sample " +
                                std::to_string(i));
        if ((provenance[i] == Provenance::HardErasure ||
             provenance[i] == Provenance::HardAdversarial) &&
            disagrees)
            throw ContractError("dataset: hard sample with flipped label at " +
                                std::to_string(i));
    }
}

Dataset generate_blobs(const BlobParams& params, std::uint64_t seed) {
    if (params.classes < 2)
        throw ContractError("generate_blobs: need at least 2 classes");
    if (params.n_per_class == 0 || params.dim == 0)
        throw ContractError("generate_blobs: counts must be positive");
    if (params.cluster_std <= 0.0)
        throw ContractError("generate_blobs: cluster_std must be > 0");
    const Matrix centers = draw_centers(params, seed);
    return sample_around_centers(centers, params, params.n_per_class, seed,
                                 kStreamSamples);
}

TrainTestSplit generate_blob_pair(const BlobParams& params, double test_fraction,
                                  std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ContractError("generate_blob_pair: test_fraction must be in (0,1)");
    const Matrix centers = draw_centers(params, seed);
    const std::size_t test_per_class = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               test_fraction * static_cast<double>(params.n_per_class))));
    TrainTestSplit split;
    split.train = sample_around_centers(centers, params, params.n_per_class,
                                        seed, kStreamSamples);
    split.test = sample_around_centers(centers, params, test_per_class, seed,
                                       kStreamTestSamples);
    return split;
}

void inject_symmetric_noise(Dataset& ds, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw ContractError("inject_symmetric_noise: rate must be in [0,1)");
    const std::size_t n = ds.size();
    const std::size_t k = static_cast<std::size_t>(
        std::llround(rate * static_cast<double>(n)));
    if (k == 0) return;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng select_rng = make_rng(derive_seed(seed, kStreamSymSelect));
    shuffle_indices(idx, select_rng);

    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t i = idx[j];
        Rng rng = make_rng(derive_seed(seed, kStreamSymRedraw, i));
        std::uniform_int_distribution<int> dist(
            0, static_cast<int>(ds.class_count) - 1);
        ds.observed_labels[i] = dist(rng);
        ds.provenance[i] = ds.observed_labels[i] != ds.true_labels[i]
                               ? Provenance::Noisy
                               : Provenance::Clean;
    }
}

void inject_asymmetric_noise(Dataset& ds, double rate,
                             const std::vector<int>& class_map,
                             std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0)
        throw ContractError("inject_asymmetric_noise: rate must be in [0,1)");
    if (class_map.size() != ds.class_count)
        throw ContractError("inject_asymmetric_noise: class_map size mismatch");
    for (std::size_t c = 0; c < class_map.size(); ++c) {
        if (class_map[c] < 0 || class_map[c] >= static_cast<int>(ds.class_count))
            throw ContractError("inject_asymmetric_noise: map target out of range");
        if (class_map[c] == static_cast<int>(c))
            throw ContractError("inject_asymmetric_noise: class " +
                                std::to_string(c) + " maps to itself");
    }
    if (rate == 0.0) return;

    for (std::size_t c = 0; c < ds.class_count; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.true_labels[i] == static_cast<int>(c)) members.push_back(i);
        const std::size_t k = static_cast<std::size_t>(
            std::llround(rate * static_cast<double>(members.size())));
        Rng rng = make_rng(derive_seed(seed, kStreamAsymSelect, c));
        shuffle_indices(members, rng);
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = members[j];
            ds.observed_labels[i] = class_map[c];
            ds.provenance[i] = Provenance::Noisy;
        }
    }
}

std::vector<std::vector<double>> augment(const std::vector<double>& x,
                                         std::size_t k, double strength,
                                         std::uint64_t seed) {
    if (k == 0) throw ContractError("augment: k must be >= 1");
    std::vector<std::vector<double>> views(k);
    Rng rng = make_rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t v = 0; v < k; ++v) {
        views[v] = x;
        for (double& coord : views[v]) coord += strength * noise(rng);
    }
    return views;
}

std::vector<double> make_hard_erasure(const std::vector<double>& x,
                                      double erase_fraction,
                                      std::uint64_t seed) {
    if (erase_fraction <= 0.0 || erase_fraction >= 1.0)
        throw ContractError("make_hard_erasure: erase_fraction must be in (0,1)");
    const std::size_t dim = x.size();
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(erase_fraction * static_cast<double>(dim)));
    std::vector<std::size_t> coords(dim);
    std::iota(coords.begin(), coords.end(), 0);
    Rng rng = make_rng(seed);
    shuffle_indices(coords, rng);
    std::vector<double> out = x;
    for (std::size_t j = 0; j < k; ++j) out[coords[j]] = 0.0;
    return out;
}

std::vector<double> make_hard_fgsm(const MlpModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& one_hot,
                                   double epsilon) {
    if (epsilon < 0.0) throw ContractError("make_hard_fgsm: epsilon must be >= 0");
    std::vector<double> grad = input_gradient(model, x, one_hot);
    std::vector<double> out = x;
    for (std::size_t d = 0; d < out.size(); ++d) {
        if (grad[d] > 0.0)
            out[d] += epsilon;
        else if (grad[d] < 0.0)
            out[d] -= epsilon;
    }
    return out;
}

namespace {

std::vector<std::size_t> pick_hard_sources(const Dataset& ds, std::size_t count,
                                           std::uint64_t seed) {
    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.provenance[i] == Provenance::Clean) clean.push_back(i);
    if (count > clean.size())
        throw ContractError("append_hard: not enough clean samples (" +
                            std::to_string(clean.size()) + " available)");
    Rng rng = make_rng(derive_seed(seed, kStreamHardSelect));
    shuffle_indices(clean, rng);
    clean.resize(count);
    return clean;
}

void append_sample(Dataset& ds, const std::vector<double>& x, int label,
                   Provenance tag) {
    ds.features.data.insert(ds.features.data.end(), x.begin(), x.end());
    ds.features.rows += 1;
    ds.observed_labels.push_back(label);
    ds.true_labels.push_back(label);
    ds.provenance.push_back(tag);
}

} // namespace

void append_hard_erasure(Dataset& ds, std::size_t count, double erase_fraction,
                         std::uint64_t seed) {
    if (count == 0) return;
    for (std::size_t src : pick_hard_sources(ds, count, seed)) {
        std::vector<double> x(ds.features.row(src),
                              ds.features.row(src) + ds.dim());
        std::vector<double> hard =
            make_hard_erasure(x, erase_fraction, derive_seed(seed, kStreamHardApply, src));
        append_sample(ds, hard, ds.true_labels[src], Provenance::HardErasure);
    }
}

void append_hard_fgsm(Dataset& ds, const MlpModel& model, std::size_t count,
                      double epsilon, std::uint64_t seed) {
    if (count == 0) return;
    for (std::size_t src : pick_hard_sources(ds, count, seed)) {
        std::vector<double> x(ds.features.row(src),
                              ds.features.row(src) + ds.dim());
        std::vector<double> hard =
            make_hard_fgsm(model, x, ds.true_one_hot(src), epsilon);
        append_sample(ds, hard, ds.true_labels[src], Provenance::HardAdversarial);
    }
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw StateError("save_dataset_csv: cannot open " + path);
    os << "# dlt-dataset v1 classes=" << ds.class_count << "\n";
    for (std::size_t d = 0; d < ds.dim(); ++d) os << "f" << d << ",";
    os << "observed_label,true_label,provenance\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* x = ds.features.row(i);
        for (std::size_t d = 0; d < ds.dim(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", x[d]);
            os << buf << ",";
        }
        os << ds.observed_labels[i] << "," << ds.true_labels[i] << ","
           << provenance_name(ds.provenance[i]) << "\n";
    }
    if (!os) throw StateError("save_dataset_csv: write failed for " + path);
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw StateError("load_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) ||
        line.rfind("# dlt-dataset v1 classes=", 0) != 0)
        throw StateError("load_dataset_csv: missing dataset header in " + path);
    Dataset ds;
    ds.class_count = std::stoul(line.substr(std::strlen("# dlt-dataset v1 classes=")));
    if (!std::getline(is, line))
        throw StateError("load_dataset_csv: missing column header in " + path);
    const std::size_t dim =
        static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 2;

    std::vector<double> features;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t d = 0; d < dim; ++d) {
            if (!std::getline(ss, cell, ','))
                throw StateError("load_dataset_csv: short row in " + path);
            features.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (!std::getline(ss, cell, ','))
            throw StateError("load_dataset_csv: short row in " + path);
        ds.observed_labels.push_back(std::stoi(cell));
        if (!std::getline(ss, cell, ','))
            throw StateError("load_dataset_csv: short row in " + path);
        ds.true_labels.push_back(std::stoi(cell));
        if (!std::getline(ss, cell))
            throw StateError("load_dataset_csv: short row in " + path);
        ds.provenance.push_back(provenance_from_name(cell));
    }
    ds.features.rows = ds.observed_labels.size();
    ds.features.cols = dim;
    ds.features.data = std::move(features);
    ds.validate();
    return ds;
}

namespace {
constexpr std::uint32_t kDatasetMagic = 0x444c5444; // "DLTD"
constexpr std::uint32_t kDatasetVersion = 1;
} // namespace

void save_dataset_binary(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StateError("save_dataset_binary: cannot open " + path);
    auto put = [&os](const auto& v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    };
    put(kDatasetMagic);
    put(kDatasetVersion);
    put(static_cast<std::uint64_t>(ds.size()));
    put(static_cast<std::uint64_t>(ds.dim()));
    put(static_cast<std::uint64_t>(ds.class_count));
    os.write(reinterpret_cast<const char*>(ds.features.data.data()),
             static_cast<std::streamsize>(ds.features.data.size() * sizeof(double)));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::int32_t obs = ds.observed_labels[i];
        const std::int32_t tru = ds.true_labels[i];
        const std::uint8_t prov = static_cast<std::uint8_t>(ds.provenance[i]);
        put(obs);
        put(tru);
        put(prov);
    }
    if (!os) throw StateError("save_dataset_binary: write failed for " + path);
}

Dataset load_dataset_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("load_dataset_binary: cannot open " + path);
    auto get = [&is](auto& v) {
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
    };
    std::uint32_t magic = 0, version = 0;
    get(magic);
    get(version);
    if (magic != kDatasetMagic || version != kDatasetVersion)
        throw StateError("load_dataset_binary: bad header in " + path);
    std::uint64_t n = 0, dim = 0, classes = 0;
    get(n);
    get(dim);
    get(classes);
    Dataset ds;
    ds.class_count = classes;
    ds.features = Matrix(n, dim);
    is.read(reinterpret_cast<char*>(ds.features.data.data()),
            static_cast<std::streamsize>(ds.features.data.size() * sizeof(double)));
    ds.observed_labels.resize(n);
    ds.true_labels.resize(n);
    ds.provenance.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::int32_t obs = 0, tru = 0;
        std::uint8_t prov = 0;
        get(obs);
        get(tru);
        get(prov);
        ds.observed_labels[i] = obs;
        ds.true_labels[i] = tru;
        ds.provenance[i] = static_cast<Provenance>(prov);
    }
    if (!is) throw StateError("load_dataset_binary: truncated file " + path);
    ds.validate();
    return ds;
}

} // namespace dlt
