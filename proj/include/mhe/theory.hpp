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

#include <cstdint>
#include <vector>

#include "mhe/linalg.hpp"

namespace mhe {

// Two-layer linear classifier with a rank-limiting bottleneck:
//   logits = W2 (W1 x) + bias,  rank(W2 W1) <= bottleneck_dim.
struct BottleneckModel {
    DenseMatrix w1;    // bottleneck_dim x feature_dim
    DenseMatrix w2;    // classes x bottleneck_dim
    DenseVector bias;  // classes; empty when bias is disabled
    bool with_bias = true;

    std::size_t feature_dim() const { return w1.cols(); }
    std::size_t bottleneck_dim() const { return w1.rows(); }
    std::size_t classes() const { return w2.rows(); }

    DenseVector forward(const DenseVector& x) const;
    // Columns are samples: logits matrix classes x N for features feature_dim x N.
    DenseMatrix forward_all(const DenseMatrix& features) const;
};

// Seeded init, scale 1/sqrt(fan_in) per layer, zero bias.
BottleneckModel bottleneck_model(std::size_t feature_dim, std::size_t bottleneck_dim,
                                 std::uint64_t classes, std::uint64_t seed, bool with_bias = true);

// W2 W1 — the effective (rank-limited) classifier weight.
DenseMatrix effective_weight(const BottleneckModel& model);

// ---------------------------------------------------------------------------
// Frobenius training (exact 0.5 ||W2 W1 F - Y||_F^2, full-batch GD).

double frobenius_loss_value(const BottleneckModel& model, const DenseMatrix& features,
                            const DenseMatrix& targets);

// Frobenius norm of the full parameter gradient at the current point.
double frobenius_gradient_norm(const BottleneckModel& model, const DenseMatrix& features,
                               const DenseMatrix& targets);

struct FrobeniusTrainResult {
    double loss = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
};

// Runs gradient descent until the gradient norm drops below grad_tol or the
// iteration budget is exhausted.
FrobeniusTrainResult train_frobenius(BottleneckModel& model, const DenseMatrix& features,
                                     const DenseMatrix& targets, double lr,
                                     std::size_t max_iterations, double grad_tol);

// Closed-form optimum of the rank-limited problem: with F = U S V^T and
// G = Y V, the best rank-r fit leaves 0.5 (||Y||_F^2 - sum_{i<=r} sigma_i(G)^2).
// Requires features of full row rank.
double frobenius_rank_optimum(const DenseMatrix& features, const DenseMatrix& targets,
                              std::size_t rank);

// ---------------------------------------------------------------------------
// Cross-entropy training.

double bottleneck_accuracy(const BottleneckModel& model, const DenseMatrix& features,
                           const std::vector<std::uint64_t>& labels);

// Full-batch GD with cosine-decayed learning rate; returns final accuracy.
double train_bottleneck_ce(BottleneckModel& model, const DenseMatrix& features,
                           const std::vector<std::uint64_t>& labels, std::size_t epochs,
                           double lr0);

// ---------------------------------------------------------------------------
// The two-loss comparison on Gaussian data (N = classes = 100, feature
// dim 100, bottleneck 1): cross-entropy drives accuracy toward 100% while
// the Frobenius objective leaves it flat; the numerical rank of the softmax
// outputs tracks the difference.

enum class TheoryLoss {
    Frobenius,
    CrossEntropy,
};

struct EpochStat {
    std::size_t epoch = 0;  // 1-based
    double accuracy = 0.0;
    std::size_t softmax_rank = 0;
};

struct GaussianRankOptions {
    std::size_t samples = 100;
    std::size_t feature_dim = 100;
    std::uint64_t classes = 100;
    std::size_t bottleneck_dim = 1;
    std::size_t epochs = 30000;
    double learning_rate = 0.0;  // <= 0 selects the per-loss default (0.1 CE, 0.05 Frobenius)
    std::uint64_t seed = 0;
    std::size_t rank_stride = 500;  // rank is measured every stride epochs plus first/last
    double rank_tolerance = 1e-8;
};

std::vector<EpochStat> run_gaussian_rank_experiment(TheoryLoss kind,
                                                    const GaussianRankOptions& options);

// ---------------------------------------------------------------------------
// Softmax perturbation bound. For logits (W* + Delta) F versus W* F, the mean
// total deviation of the softmax outputs is bounded by
//   sum_j (exp(max_i |<Delta_j, F_i>|) - 1).

struct BoundCheck {
    double error = 0.0;
    double bound = 0.0;
    bool holds = false;
};

BoundCheck softmax_perturbation_bound(const DenseMatrix& w_star, const DenseMatrix& delta,
                                      const DenseMatrix& features);

// ---------------------------------------------------------------------------
// Sum of per-group Kronecker products: the rank-G additive combination of
// multi-head outputs. All groups must agree on the per-head lengths.
DenseVector grouped_mhe_cp_output(const std::vector<std::vector<DenseVector>>& groups);

// ---------------------------------------------------------------------------
// Random-perturbation probe around a converged Frobenius minimum: perturb,
// re-descend, and report where the restarts land. Requires the input model
// to be converged (gradient norm below 1e-6).

struct SaddleReport {
    double baseline_loss = 0.0;
    double best_loss = 0.0;
    bool escape_found = false;  // some restart descended below the baseline
    std::vector<double> redescended_losses;
};

struct SaddleOptions {
    double perturbation_scale = 0.1;
    std::size_t trials = 8;
    std::uint64_t seed = 0;
    double lr = 0.01;
    std::size_t max_iterations = 200000;
    double grad_tol = 1e-8;
};

SaddleReport saddle_probe(const BottleneckModel& converged, const DenseMatrix& features,
                          const DenseMatrix& targets, const SaddleOptions& options);

// Seeded probe problem used by the restart-consistency checks: `samples`
// Gaussian feature columns and one-hot targets for labels i mod classes.
void gaussian_onehot_problem(std::size_t samples, std::size_t dim, std::uint64_t classes,
                             std::uint64_t seed, DenseMatrix& features, DenseMatrix& targets,
                             std::vector<std::uint64_t>* labels = nullptr);

}  // namespace mhe
