#include "dlt/mlp.hpp"

#include "dlt/errors.hpp"
#include "dlt/kernels.hpp"
#include "dlt/rng.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

namespace dlt {

namespace {

constexpr double kProbClamp = 1e-12;

bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

void require_finite(const Matrix& M, const char* what, std::size_t layer) {
    if (!all_finite(M.data.data(), M.data.size()))
        throw NumericError(std::string(what) + ": non-finite values at layer " +
                           std::to_string(layer));
}

void check_one_hot(const std::vector<double>& y) {
    std::size_t ones = 0;
    for (double v : y) {
        if (v == 1.0)
            ++ones;
        else if (v != 0.0)
            throw ContractError("cross_entropy: target is not one-hot");
    }
    if (ones != 1) throw ContractError("cross_entropy: target is not one-hot");
}

// Pre-activations and post-activations of every layer for a batch.
struct ForwardTrace {
    std::vector<Matrix> pre;   // Z_l per layer
    std::vector<Matrix> post;  // relu(Z_l), probs for the last layer
};

ForwardTrace forward_trace(const MlpModel& model, const Matrix& X) {
    ForwardTrace t;
    t.pre.resize(model.layers.size());
    t.post.resize(model.layers.size());
    const Matrix* input = &X;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        kernels::linear_forward(*input, model.layers[l].weight,
                                model.layers[l].bias, t.pre[l]);
        require_finite(t.pre[l], "forward", l);
        t.post[l] = t.pre[l];
        if (l + 1 < model.layers.size())
            kernels::relu_inplace(t.post[l]);
        else
            kernels::softmax_rows(t.post[l]);
        input = &t.post[l];
    }
    return t;
}

// Backpropagate dZ of the output layer to parameter gradients (and optionally
// the input gradient).
Gradients backprop_from_output(const MlpModel& model, const Matrix& X,
                               const ForwardTrace& trace, Matrix dZ,
                               Matrix* input_grad_out = nullptr) {
    Gradients g = Gradients::zeros_like(model);
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        require_finite(dZ, "backward", l);
        const Matrix& acts = (l == 0) ? X : trace.post[l - 1];
        kernels::linear_backward_params(dZ, acts, g.weight[l], g.bias[l]);
        if (l > 0) {
            Matrix dA;
            kernels::linear_backward_input(dZ, model.layers[l].weight, dA);
            kernels::relu_backward_inplace(dA, trace.pre[l - 1]);
            dZ = std::move(dA);
        } else if (input_grad_out) {
            kernels::linear_backward_input(dZ, model.layers[l].weight,
                                           *input_grad_out);
        }
    }
    return g;
}

// dZ for the softmax layer given dLoss/dProbs, row by row.
void softmax_jacobian_rows(const Matrix& probs, const Matrix& dProbs, Matrix& dZ) {
    dZ = Matrix(probs.rows, probs.cols);
    for (std::size_t n = 0; n < probs.rows; ++n) {
        const double* p = probs.row(n);
        const double* dp = dProbs.row(n);
        double dot = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) dot += dp[c] * p[c];
        double* dz = dZ.row(n);
        for (std::size_t c = 0; c < probs.cols; ++c) dz[c] = p[c] * (dp[c] - dot);
    }
}

} // namespace

void MlpModel::validate() const {
    if (layers.empty()) throw ContractError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& d = layers[l];
        if (d.weight.rows == 0 || d.weight.cols == 0)
            throw ShapeError("layer " + std::to_string(l) + " is empty");
        if (d.bias.size() != d.weight.rows)
            throw ShapeError("layer " + std::to_string(l) + " bias size mismatch");
        if (l > 0 && layers[l - 1].weight.rows != d.weight.cols)
            throw ShapeError("layer " + std::to_string(l) +
                             " input dim does not chain");
        if (!all_finite(d.weight.data.data(), d.weight.data.size()) ||
            !all_finite(d.bias.data(), d.bias.size()))
            throw NumericError("layer " + std::to_string(l) +
                               " has non-finite parameters");
    }
}

MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t classes, std::uint64_t seed) {
    if (input_dim == 0 || classes < 2)
        throw ContractError("make_mlp: need input_dim >= 1 and classes >= 2");
    MlpModel m;
    std::size_t in = input_dim;
    std::vector<std::size_t> dims = hidden;
    dims.push_back(classes);
    for (std::size_t l = 0; l < dims.size(); ++l) {
        DenseLayer layer;
        layer.weight = Matrix(dims[l], in);
        layer.bias.assign(dims[l], 0.0);
        const double a = std::sqrt(6.0 / static_cast<double>(in + dims[l]));
        Rng rng = make_rng(derive_seed(seed, l));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& w : layer.weight.data) w = dist(rng);
        m.layers.push_back(std::move(layer));
        in = dims[l];
    }
    return m;
}

std::vector<double> forward(const MlpModel& model, const std::vector<double>& x) {
    Matrix X(1, x.size());
    X.data = x;
    Matrix probs = forward_batch(model, X);
    return probs.data;
}

Matrix forward_batch(const MlpModel& model, const Matrix& X) {
    if (model.layers.empty()) throw ContractError("forward: model has no layers");
    if (X.cols != model.input_dim())
        throw ShapeError("forward: input dim " + std::to_string(X.cols) +
                         " != model dim " + std::to_string(model.input_dim()));
    Matrix cur = X;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Matrix next;
        kernels::linear_forward(cur, model.layers[l].weight, model.layers[l].bias,
                                next);
        if (l + 1 < model.layers.size())
            kernels::relu_inplace(next);
        else
            kernels::softmax_rows(next);
        cur = std::move(next);
    }
    return cur;
}

double cross_entropy(const std::vector<double>& probs,
                     const std::vector<double>& one_hot) {
    if (probs.size() != one_hot.size())
        throw ShapeError("cross_entropy: length mismatch");
    check_one_hot(one_hot);
    return cross_entropy_soft(probs, one_hot);
}

double cross_entropy_soft(const std::vector<double>& probs,
                          const std::vector<double>& target) {
    if (probs.size() != target.size())
        throw ShapeError("cross_entropy_soft: length mismatch");
    double loss = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c)
        if (target[c] != 0.0)
            loss -= target[c] * std::log(std::max(probs[c], kProbClamp));
    return loss;
}

double mse_loss(const std::vector<double>& probs,
                const std::vector<double>& target) {
    if (probs.size() != target.size())
        throw ShapeError("mse_loss: length mismatch");
    double sum = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double d = probs[c] - target[c];
        sum += d * d;
    }
    return sum / static_cast<double>(probs.size());
}

std::vector<double> per_sample_losses(const Matrix& probs, const Matrix& targets,
                                      LossKind kind) {
    if (probs.rows != targets.rows || probs.cols != targets.cols)
        throw ShapeError("per_sample_losses: shape mismatch");
    std::vector<double> out(probs.rows);
    for (std::size_t n = 0; n < probs.rows; ++n) {
        const double* p = probs.row(n);
        const double* t = targets.row(n);
        if (kind == LossKind::CrossEntropy) {
            double loss = 0.0;
            for (std::size_t c = 0; c < probs.cols; ++c)
                if (t[c] != 0.0) loss -= t[c] * std::log(std::max(p[c], kProbClamp));
            out[n] = loss;
        } else {
            double sum = 0.0;
            for (std::size_t c = 0; c < probs.cols; ++c) {
                const double d = p[c] - t[c];
                sum += d * d;
            }
            out[n] = sum / static_cast<double>(probs.cols);
        }
    }
    return out;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    g.weight.reserve(model.layers.size());
    g.bias.reserve(model.layers.size());
    for (const DenseLayer& d : model.layers) {
        g.weight.emplace_back(d.weight.rows, d.weight.cols, 0.0);
        g.bias.emplace_back(d.bias.size(), 0.0);
    }
    return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    if (other.weight.size() != weight.size())
        throw ShapeError("Gradients::add_scaled: layer count mismatch");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (std::size_t i = 0; i < weight[l].data.size(); ++i)
            weight[l].data[i] += scale * other.weight[l].data[i];
        for (std::size_t i = 0; i < bias[l].size(); ++i)
            bias[l][i] += scale * other.bias[l][i];
    }
}

Gradients backward(const MlpModel& model, const Matrix& X, const Matrix& targets,
                   LossKind kind, const std::vector<double>& weights) {
    if (X.rows == 0) throw ContractError("backward: empty batch");
    if (targets.rows != X.rows || targets.cols != model.class_count())
        throw ShapeError("backward: target shape mismatch");
    if (weights.size() != X.rows)
        throw ShapeError("backward: weights size mismatch");

    ForwardTrace trace = forward_trace(model, X);
    const Matrix& probs = trace.post.back();
    const double inv_n = 1.0 / static_cast<double>(X.rows);

    Matrix dZ;
    if (kind == LossKind::CrossEntropy) {
        // d(-sum t log p)/dlogits = p*sum(t) - t; equals p - t when t sums to 1.
        dZ = Matrix(probs.rows, probs.cols);
        for (std::size_t n = 0; n < probs.rows; ++n) {
            const double* p = probs.row(n);
            const double* t = targets.row(n);
            double tsum = 0.0;
            for (std::size_t c = 0; c < probs.cols; ++c) tsum += t[c];
            const double w = weights[n] * inv_n;
            double* dz = dZ.row(n);
            for (std::size_t c = 0; c < probs.cols; ++c)
                dz[c] = w * (p[c] * tsum - t[c]);
        }
    } else {
        Matrix dP(probs.rows, probs.cols);
        const double two_over_c = 2.0 / static_cast<double>(probs.cols);
        for (std::size_t n = 0; n < probs.rows; ++n) {
            const double* p = probs.row(n);
            const double* t = targets.row(n);
            const double w = weights[n] * inv_n;
            double* dp = dP.row(n);
            for (std::size_t c = 0; c < probs.cols; ++c)
                dp[c] = w * two_over_c * (p[c] - t[c]);
        }
        softmax_jacobian_rows(probs, dP, dZ);
    }
    return backprop_from_output(model, X, trace, std::move(dZ));
}

Gradients backward_uniform_reg(const MlpModel& model, const Matrix& X) {
    if (X.rows == 0) throw ContractError("backward_uniform_reg: empty batch");
    ForwardTrace trace = forward_trace(model, X);
    const Matrix& probs = trace.post.back();
    const std::size_t C = probs.cols;
    const double pi = 1.0 / static_cast<double>(C);
    const double inv_m = 1.0 / static_cast<double>(probs.rows);

    std::vector<double> mean(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < probs.rows; ++n) sum += probs(n, c);
        mean[c] = sum * inv_m;
    }
    // d KL(pi || mean) / d mean_c = -pi / mean_c; the clamp region contributes
    // no gradient.
    Matrix dP(probs.rows, C);
    for (std::size_t n = 0; n < probs.rows; ++n) {
        double* dp = dP.row(n);
        for (std::size_t c = 0; c < C; ++c) {
            const double denom = std::max(mean[c], kProbClamp);
            dp[c] = (mean[c] > kProbClamp) ? -pi / denom * inv_m : 0.0;
        }
    }
    Matrix dZ;
    softmax_jacobian_rows(probs, dP, dZ);
    return backprop_from_output(model, X, trace, std::move(dZ));
}

SgdState SgdState::init(const MlpModel& model, double lr, double momentum,
                        double weight_decay) {
    if (lr <= 0.0) throw ContractError("SgdState: learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ContractError("SgdState: momentum must be in [0,1)");
    if (weight_decay < 0.0)
        throw ContractError("SgdState: weight decay must be >= 0");
    SgdState s;
    s.learning_rate = lr;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    for (const DenseLayer& d : model.layers) {
        s.velocity_w.emplace_back(d.weight.rows, d.weight.cols, 0.0);
        s.velocity_b.emplace_back(d.bias.size(), 0.0);
    }
    return s;
}

void sgd_step(MlpModel& model, SgdState& state, const Gradients& grads) {
    if (state.velocity_w.size() != model.layers.size() ||
        grads.weight.size() != model.layers.size())
        throw ShapeError("sgd_step: layer count mismatch");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        DenseLayer& layer = model.layers[l];
        Matrix& vw = state.velocity_w[l];
        if (vw.rows != layer.weight.rows || vw.cols != layer.weight.cols)
            throw ShapeError("sgd_step: velocity shape mismatch at layer " +
                             std::to_string(l));
        for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
            double& v = vw.data[i];
            v = state.momentum * v + grads.weight[l].data[i] +
                state.weight_decay * layer.weight.data[i];
            layer.weight.data[i] -= state.learning_rate * v;
        }
        std::vector<double>& vb = state.velocity_b[l];
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            double& v = vb[i];
            v = state.momentum * v + grads.bias[l][i] +
                state.weight_decay * layer.bias[i];
            layer.bias[i] -= state.learning_rate * v;
        }
    }
}

std::vector<double> input_gradient(const MlpModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& one_hot) {
    if (x.size() != model.input_dim())
        throw ShapeError("input_gradient: input dim mismatch");
    check_one_hot(one_hot);
    Matrix X(1, x.size());
    X.data = x;
    ForwardTrace trace = forward_trace(model, X);
    const Matrix& probs = trace.post.back();
    Matrix dZ(1, probs.cols);
    for (std::size_t c = 0; c < probs.cols; ++c)
        dZ(0, c) = probs(0, c) - one_hot[c];
    Matrix dX;
    backprop_from_output(model, X, trace, std::move(dZ), &dX);
    return dX.data;
}

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x444c544d; // "DLTM"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}
} // namespace

void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw StateError("save_model: cannot open " + path);
    write_raw(os, kCheckpointMagic);
    write_raw(os, kCheckpointVersion);
    write_raw(os, static_cast<std::uint64_t>(model.layers.size()));
    for (const DenseLayer& d : model.layers) {
        write_raw(os, static_cast<std::uint64_t>(d.weight.rows));
        write_raw(os, static_cast<std::uint64_t>(d.weight.cols));
        os.write(reinterpret_cast<const char*>(d.weight.data.data()),
                 static_cast<std::streamsize>(d.weight.data.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(d.bias.data()),
                 static_cast<std::streamsize>(d.bias.size() * sizeof(double)));
    }
    if (!os) throw StateError("save_model: write failed for " + path);
}

MlpModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("load_model: cannot open " + path);
    std::uint32_t magic = 0, version = 0;
    read_raw(is, magic);
    read_raw(is, version);
    if (magic != kCheckpointMagic)
        throw StateError("load_model: bad magic in " + path);
    if (version != kCheckpointVersion)
        throw StateError("load_model: unsupported version " +
                         std::to_string(version));
    std::uint64_t n_layers = 0;
    read_raw(is, n_layers);
    MlpModel m;
    for (std::uint64_t l = 0; l < n_layers; ++l) {
        std::uint64_t out = 0, in = 0;
        read_raw(is, out);
        read_raw(is, in);
        DenseLayer d;
        d.weight = Matrix(out, in);
        d.bias.assign(out, 0.0);
        is.read(reinterpret_cast<char*>(d.weight.data.data()),
                static_cast<std::streamsize>(d.weight.data.size() * sizeof(double)));
        is.read(reinterpret_cast<char*>(d.bias.data()),
                static_cast<std::streamsize>(d.bias.size() * sizeof(double)));
        m.layers.push_back(std::move(d));
    }
    if (!is) throw StateError("load_model: truncated checkpoint " + path);
    m.validate();
    return m;
}

} // namespace dlt
