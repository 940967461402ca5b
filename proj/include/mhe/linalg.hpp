// Copyright 2026 The MHE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace mhe {

using DenseVector = std::vector<double>;

// Row-major dense matrix of 64-bit reals. Deliberately minimal: the training
// loops in this project only need shapes, element access and raw data.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const DenseMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    void fill(double value);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// SplitMix64 stream. Chosen because the update rule is pure 64-bit integer
// arithmetic: the same seed yields the same stream on every platform, which
// is what makes checkpoints and experiment reruns byte-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t seed() const { return seed_origin_; }

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via the Marsaglia polar method (sqrt/log only, no
    // trig, so cross-platform drift stays at the 1-ulp level).
    double normal();

    // Uniform integer in [0, n). Lemire multiply-shift, no modulo bias
    // worth speaking of at the ranges used here.
    std::uint64_t below(std::uint64_t n);

    // Derive an independent child stream.
    Rng fork();

private:
    std::uint64_t state_;
    std::uint64_t seed_origin_ = 0;
};

// ---------------------------------------------------------------------------
// Elementary operations.

double dot(const DenseVector& a, const DenseVector& b);

// O = Wx (+ b). Throws ValidationError with both shapes on mismatch.
DenseVector affine(const DenseMatrix& w, const DenseVector& x);
DenseVector affine(const DenseMatrix& w, const DenseVector& x, const DenseVector& b);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& m);

// grad += scale * u v^T
void add_outer(DenseMatrix& grad, const DenseVector& u, const DenseVector& v, double scale = 1.0);

// Numerically stable softmax with temperature. Output sums to 1 within 1e-12.
DenseVector softmax(const DenseVector& o, double temperature = 1.0);

DenseVector sigmoid(const DenseVector& o);

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar value together with the analytic gradient
// with respect to the logits; every gradient here is covered by the
// finite-difference suite in the tests.

struct ScalarLoss {
    double value = 0.0;
    DenseVector grad;
};

// -log softmax(logits)[target]; grad = softmax(logits) - onehot(target).
ScalarLoss cross_entropy_loss(const DenseVector& logits, std::uint64_t target);

// Mean binary cross-entropy over components, fused stable form.
// grad = (sigmoid(logits) - targets) / n. Targets must be exactly 0 or 1.
ScalarLoss bce_with_sigmoid_loss(const DenseVector& logits, const DenseVector& targets);

struct MatrixLoss {
    double value = 0.0;
    DenseMatrix grad;
};

// 0.5 * ||prediction - target||_F^2; grad = prediction - target.
MatrixLoss frobenius_loss(const DenseMatrix& prediction, const DenseMatrix& target);

// params <- params - lr * grad
void sgd_step(DenseMatrix& params, const DenseMatrix& grad, double lr);
void sgd_step(DenseVector& params, const DenseVector& grad, double lr);

// ---------------------------------------------------------------------------
// Singular values via one-sided Jacobi. Plenty at the matrix sizes this
// project measures (a few hundred rows); deterministic sweep order.

struct Svd {
    DenseMatrix u;      // m x n, columns of the compact factor (zero where sigma is 0)
    DenseVector sigma;  // descending
    DenseMatrix v;      // n x n orthogonal
};

Svd jacobi_svd(const DenseMatrix& m);

DenseVector singular_values(const DenseMatrix& m);

// Count of singular values above rel_tolerance * sigma_max.
std::size_t numerical_rank(const DenseMatrix& m, double rel_tolerance = 1e-8);

// ---------------------------------------------------------------------------
// Central finite differences, the independent oracle the gradient tests
// compare against. step is the half-width of the stencil.

DenseVector finite_difference_gradient(const std::function<double(const DenseVector&)>& f,
                                       const DenseVector& at, double step = 1e-5);

}  // namespace mhe
