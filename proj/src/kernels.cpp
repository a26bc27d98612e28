#include "dlt/kernels.hpp"

#include "dlt/errors.hpp"

#include <atomic>
#include <cmath>
#include <string>

namespace dlt::kernels {

namespace {
std::atomic<bool> g_parallel{true};

void check_forward_shapes(const Matrix& X, const Matrix& W,
                          const std::vector<double>& b) {
    if (X.cols != W.cols)
        throw ShapeError("linear_forward: input dim " + std::to_string(X.cols) +
                         " != weight in dim " + std::to_string(W.cols));
    if (b.size() != W.rows)
        throw ShapeError("linear_forward: bias size " + std::to_string(b.size()) +
                         " != weight out dim " + std::to_string(W.rows));
}
} // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

namespace serial {

void linear_forward(const Matrix& X, const Matrix& W,
                    const std::vector<double>& b, Matrix& Y) {
    check_forward_shapes(X, W, b);
    Y.rows = X.rows;
    Y.cols = W.rows;
    Y.data.resize(Y.rows * Y.cols);
    for (std::size_t n = 0; n < X.rows; ++n) {
        const double* x = X.row(n);
        double* y = Y.row(n);
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double* w = W.row(o);
            double sum = b[o];
            for (std::size_t i = 0; i < W.cols; ++i) sum += x[i] * w[i];
            y[o] = sum;
        }
    }
}

void relu_inplace(Matrix& M) {
    for (std::size_t n = 0; n < M.rows; ++n) {
        double* r = M.row(n);
        for (std::size_t c = 0; c < M.cols; ++c)
            if (r[c] < 0.0) r[c] = 0.0;
    }
}

void softmax_rows(Matrix& M) {
    for (std::size_t n = 0; n < M.rows; ++n) {
        double* r = M.row(n);
        double mx = r[0];
        for (std::size_t c = 1; c < M.cols; ++c)
            if (r[c] > mx) mx = r[c];
        double sum = 0.0;
        for (std::size_t c = 0; c < M.cols; ++c) {
            r[c] = std::exp(r[c] - mx);
            sum += r[c];
        }
        for (std::size_t c = 0; c < M.cols; ++c) r[c] /= sum;
    }
}

void linear_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX) {
    if (dY.cols != W.rows)
        throw ShapeError("linear_backward_input: grad cols != weight out dim");
    dX.rows = dY.rows;
    dX.cols = W.cols;
    dX.data.assign(dX.rows * dX.cols, 0.0);
    for (std::size_t n = 0; n < dY.rows; ++n) {
        const double* dy = dY.row(n);
        double* dx = dX.row(n);
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double g = dy[o];
            const double* w = W.row(o);
            for (std::size_t i = 0; i < W.cols; ++i) dx[i] += g * w[i];
        }
    }
}

void linear_backward_params(const Matrix& dY, const Matrix& X, Matrix& dW,
                            std::vector<double>& db) {
    if (dY.rows != X.rows)
        throw ShapeError("linear_backward_params: sample counts differ");
    dW.rows = dY.cols;
    dW.cols = X.cols;
    dW.data.assign(dW.rows * dW.cols, 0.0);
    db.assign(dY.cols, 0.0);
    for (std::size_t o = 0; o < dY.cols; ++o) {
        double* dwo = dW.row(o);
        double dbo = 0.0;
        for (std::size_t n = 0; n < X.rows; ++n) {
            const double g = dY(n, o);
            dbo += g;
            const double* x = X.row(n);
            for (std::size_t i = 0; i < X.cols; ++i) dwo[i] += g * x[i];
        }
        db[o] = dbo;
    }
}

void relu_backward_inplace(Matrix& dH, const Matrix& Z) {
    if (dH.rows != Z.rows || dH.cols != Z.cols)
        throw ShapeError("relu_backward_inplace: shape mismatch");
    for (std::size_t n = 0; n < dH.rows; ++n) {
        double* d = dH.row(n);
        const double* z = Z.row(n);
        for (std::size_t c = 0; c < dH.cols; ++c)
            if (z[c] <= 0.0) d[c] = 0.0;
    }
}

} // namespace serial

void linear_forward(const Matrix& X, const Matrix& W,
                    const std::vector<double>& b, Matrix& Y) {
    if (!parallel_enabled()) return serial::linear_forward(X, W, b, Y);
    check_forward_shapes(X, W, b);
    Y.rows = X.rows;
    Y.cols = W.rows;
    Y.data.resize(Y.rows * Y.cols);
    const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(X.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
        const double* x = X.row(static_cast<std::size_t>(n));
        double* y = Y.row(static_cast<std::size_t>(n));
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double* w = W.row(o);
            double sum = b[o];
            for (std::size_t i = 0; i < W.cols; ++i) sum += x[i] * w[i];
            y[o] = sum;
        }
    }
}

void relu_inplace(Matrix& M) {
    if (!parallel_enabled()) return serial::relu_inplace(M);
    const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(M.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
        double* r = M.row(static_cast<std::size_t>(n));
        for (std::size_t c = 0; c < M.cols; ++c)
            if (r[c] < 0.0) r[c] = 0.0;
    }
}

void softmax_rows(Matrix& M) {
    if (!parallel_enabled()) return serial::softmax_rows(M);
    const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(M.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
        double* r = M.row(static_cast<std::size_t>(n));
        double mx = r[0];
        for (std::size_t c = 1; c < M.cols; ++c)
            if (r[c] > mx) mx = r[c];
        double sum = 0.0;
        for (std::size_t c = 0; c < M.cols; ++c) {
            r[c] = std::exp(r[c] - mx);
            sum += r[c];
        }
        for (std::size_t c = 0; c < M.cols; ++c) r[c] /= sum;
    }
}

void linear_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX) {
    if (!parallel_enabled()) return serial::linear_backward_input(dY, W, dX);
    if (dY.cols != W.rows)
        throw ShapeError("linear_backward_input: grad cols != weight out dim");
    dX.rows = dY.rows;
    dX.cols = W.cols;
    dX.data.assign(dX.rows * dX.cols, 0.0);
    const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(dY.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
        const double* dy = dY.row(static_cast<std::size_t>(n));
        double* dx = dX.row(static_cast<std::size_t>(n));
        for (std::size_t o = 0; o < W.rows; ++o) {
            const double g = dy[o];
            const double* w = W.row(o);
            for (std::size_t i = 0; i < W.cols; ++i) dx[i] += g * w[i];
        }
    }
}

void linear_backward_params(const Matrix& dY, const Matrix& X, Matrix& dW,
                            std::vector<double>& db) {
    if (!parallel_enabled()) return serial::linear_backward_params(dY, X, dW, db);
    if (dY.rows != X.rows)
        throw ShapeError("linear_backward_params: sample counts differ");
    dW.rows = dY.cols;
    dW.cols = X.cols;
    dW.data.assign(dW.rows * dW.cols, 0.0);
    db.assign(dY.cols, 0.0);
    const std::ptrdiff_t O = static_cast<std::ptrdiff_t>(dY.cols);
    // Parallel over output rows; the per-element reduction over n keeps the
    // serial order, so the result does not depend on the thread count.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < O; ++o) {
        double* dwo = dW.row(static_cast<std::size_t>(o));
        double dbo = 0.0;
        for (std::size_t n = 0; n < X.rows; ++n) {
            const double g = dY(n, static_cast<std::size_t>(o));
            dbo += g;
            const double* x = X.row(n);
            for (std::size_t i = 0; i < X.cols; ++i) dwo[i] += g * x[i];
        }
        db[static_cast<std::size_t>(o)] = dbo;
    }
}

void relu_backward_inplace(Matrix& dH, const Matrix& Z) {
    if (!parallel_enabled()) return serial::relu_backward_inplace(dH, Z);
    if (dH.rows != Z.rows || dH.cols != Z.cols)
        throw ShapeError("relu_backward_inplace: shape mismatch");
    const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(dH.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < N; ++n) {
        double* d = dH.row(static_cast<std::size_t>(n));
        const double* z = Z.row(static_cast<std::size_t>(n));
        for (std::size_t c = 0; c < dH.cols; ++c)
            if (z[c] <= 0.0) d[c] = 0.0;
    }
}

} // namespace dlt::kernels
