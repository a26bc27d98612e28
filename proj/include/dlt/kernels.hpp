#pragma once

#include "dlt/matrix.hpp"

#include <vector>

// Batch-level dense kernels. The top-level functions run the OpenMP path when
// it is enabled; dlt::kernels::serial holds the plain-loop reference used by
// the tests and the benchmark. Each output element is computed with the same
// inner-loop order on both paths, so results are bitwise identical regardless
// of thread count.
namespace dlt::kernels {

void set_parallel(bool enabled);
bool parallel_enabled();

namespace serial {

// Y = X * W^T + b, one row per sample. W is out x in.
void linear_forward(const Matrix& X, const Matrix& W,
                    const std::vector<double>& b, Matrix& Y);

void relu_inplace(Matrix& M);

// Row-wise softmax with max subtraction.
void softmax_rows(Matrix& M);

// dX = dY * W.
void linear_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX);

// dW[o][i] = sum_n dY[n][o] * X[n][i]; db[o] = sum_n dY[n][o].
void linear_backward_params(const Matrix& dY, const Matrix& X, Matrix& dW,
                            std::vector<double>& db);

// dZ[n][k] = Z[n][k] > 0 ? dH[n][k] : 0, written into dH.
void relu_backward_inplace(Matrix& dH, const Matrix& Z);

} // namespace serial

void linear_forward(const Matrix& X, const Matrix& W,
                    const std::vector<double>& b, Matrix& Y);
void relu_inplace(Matrix& M);
void softmax_rows(Matrix& M);
void linear_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX);
void linear_backward_params(const Matrix& dY, const Matrix& X, Matrix& dW,
                            std::vector<double>& db);
void relu_backward_inplace(Matrix& dH, const Matrix& Z);

} // namespace dlt::kernels
