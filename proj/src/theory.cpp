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

#include "mhe/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mhe/data.hpp"
#include "mhe/errors.hpp"
#include "mhe/label_codec.hpp"

namespace mhe {

namespace {

DenseVector column(const DenseMatrix& m, std::size_t c) {
    DenseVector v(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
    return v;
}

void check_sample_shapes(const BottleneckModel& model, const DenseMatrix& features,
                         std::size_t target_rows, std::size_t target_cols) {
    if (features.rows() != model.feature_dim()) {
        throw ValidationError("features have " + std::to_string(features.rows()) +
                              " rows, model expects " + std::to_string(model.feature_dim()));
    }
    if (target_rows != model.classes() || target_cols != features.cols()) {
        throw ValidationError("targets must be classes x samples (" +
                              std::to_string(model.classes()) + " x " +
                              std::to_string(features.cols()) + ")");
    }
}

struct FrobeniusGrads {
    DenseMatrix g1;
    DenseMatrix g2;
    double loss = 0.0;
};

// L = 0.5 || W2 W1 F (+ b) - Y ||_F^2; residual R gives
//   dW2 = R (W1 F)^T,  dW1 = W2^T R F^T,  db = row sums of R.
FrobeniusGrads frobenius_grads(const BottleneckModel& model, const DenseMatrix& features,
                               const DenseMatrix& targets, DenseVector* bias_grad) {
    DenseMatrix hidden = matmul(model.w1, features);   // bottleneck x N
    DenseMatrix residual = matmul(model.w2, hidden);   // classes x N
    if (model.with_bias) {
        for (std::size_t r = 0; r < residual.rows(); ++r)
            for (std::size_t c = 0; c < residual.cols(); ++c) residual(r, c) += model.bias[r];
    }
    FrobeniusGrads out;
    out.loss = 0.0;
    for (std::size_t i = 0; i < residual.size(); ++i) {
        residual.values()[i] -= targets.values()[i];
        out.loss += 0.5 * residual.values()[i] * residual.values()[i];
    }
    out.g2 = matmul(residual, transpose(hidden));
    out.g1 = matmul(matmul(transpose(model.w2), residual), transpose(features));
    if (bias_grad != nullptr && model.with_bias) {
        bias_grad->assign(model.classes(), 0.0);
        for (std::size_t r = 0; r < residual.rows(); ++r)
            for (std::size_t c = 0; c < residual.cols(); ++c) (*bias_grad)[r] += residual(r, c);
    }
    return out;
}

double grad_norm(const FrobeniusGrads& g, const DenseVector* bias_grad) {
    double s = 0.0;
    for (double v : g.g1.values()) s += v * v;
    for (double v : g.g2.values()) s += v * v;
    if (bias_grad != nullptr) {
        for (double v : *bias_grad) s += v * v;
    }
    return std::sqrt(s);
}

}  // namespace

DenseVector BottleneckModel::forward(const DenseVector& x) const {
    DenseVector hidden = affine(w1, x);
    return with_bias ? affine(w2, hidden, bias) : affine(w2, hidden);
}

DenseMatrix BottleneckModel::forward_all(const DenseMatrix& features) const {
    DenseMatrix logits = matmul(w2, matmul(w1, features));
    if (with_bias) {
        for (std::size_t r = 0; r < logits.rows(); ++r)
            for (std::size_t c = 0; c < logits.cols(); ++c) logits(r, c) += bias[r];
    }
    return logits;
}

BottleneckModel bottleneck_model(std::size_t feature_dim, std::size_t bottleneck_dim,
                                 std::uint64_t classes, std::uint64_t seed, bool with_bias) {
    if (feature_dim == 0 || bottleneck_dim == 0 || classes == 0) {
        throw ValidationError("bottleneck_model: dimensions must be positive");
    }
    Rng rng(seed);
    BottleneckModel model;
    model.with_bias = with_bias;
    model.w1 = DenseMatrix(bottleneck_dim, feature_dim);
    model.w2 = DenseMatrix(classes, bottleneck_dim);
    double s1 = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    double s2 = 1.0 / std::sqrt(static_cast<double>(bottleneck_dim));
    for (double& v : model.w1.values()) v = rng.normal() * s1;
    for (double& v : model.w2.values()) v = rng.normal() * s2;
    if (with_bias) model.bias.assign(classes, 0.0);
    return model;
}

DenseMatrix effective_weight(const BottleneckModel& model) {
    return matmul(model.w2, model.w1);
}

double frobenius_loss_value(const BottleneckModel& model, const DenseMatrix& features,
                            const DenseMatrix& targets) {
    check_sample_shapes(model, features, targets.rows(), targets.cols());
    return frobenius_loss(model.forward_all(features), targets).value;
}

double frobenius_gradient_norm(const BottleneckModel& model, const DenseMatrix& features,
                               const DenseMatrix& targets) {
    check_sample_shapes(model, features, targets.rows(), targets.cols());
    DenseVector bias_grad;
    FrobeniusGrads g = frobenius_grads(model, features, targets,
                                       model.with_bias ? &bias_grad : nullptr);
    return grad_norm(g, model.with_bias ? &bias_grad : nullptr);
}

FrobeniusTrainResult train_frobenius(BottleneckModel& model, const DenseMatrix& features,
                                     const DenseMatrix& targets, double lr,
                                     std::size_t max_iterations, double grad_tol) {
    check_sample_shapes(model, features, targets.rows(), targets.cols());
    FrobeniusTrainResult result;
    DenseVector bias_grad;
    DenseVector* bg = model.with_bias ? &bias_grad : nullptr;
    for (std::size_t it = 0; it < max_iterations; ++it) {
        FrobeniusGrads g = frobenius_grads(model, features, targets, bg);
        result.loss = g.loss;
        result.gradient_norm = grad_norm(g, bg);
        result.iterations = it;
        if (result.gradient_norm < grad_tol) return result;
        sgd_step(model.w1, g.g1, lr);
        sgd_step(model.w2, g.g2, lr);
        if (model.with_bias) sgd_step(model.bias, bias_grad, lr);
    }
    FrobeniusGrads g = frobenius_grads(model, features, targets, bg);
    result.loss = g.loss;
    result.gradient_norm = grad_norm(g, bg);
    result.iterations = max_iterations;
    return result;
}

double frobenius_rank_optimum(const DenseMatrix& features, const DenseMatrix& targets,
                              std::size_t rank) {
    if (features.cols() != targets.cols()) {
        throw ValidationError("frobenius_rank_optimum: features and targets disagree on N");
    }
    Svd svd = jacobi_svd(features);
    // G = Y V spans the reachable directions; the best rank-r fit keeps its
    // top r singular values.
    DenseMatrix g = matmul(targets, svd.v);
    DenseVector sigma = singular_values(g);

    double total = 0.0;
    for (double v : targets.values()) total += v * v;
    double kept = 0.0;
    for (std::size_t i = 0; i < sigma.size() && i < rank; ++i) kept += sigma[i] * sigma[i];
    return 0.5 * (total - kept);
}

// ---------------------------------------------------------------------------
// Cross-entropy training

namespace {

// Adam with bias correction. Plain gradient descent stalls on the rank-1
// cross-entropy problem long before the accuracy the experiments need, so
// the lab's trainers use the adaptive update.
struct AdamState {
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(double* params, const double* grad, std::size_t n, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }

    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
};

struct BottleneckTrainer {
    explicit BottleneckTrainer(const BottleneckModel& model)
        : a1(model.w1.size()), a2(model.w2.size()), ab(model.bias.size()) {}

    AdamState a1, a2, ab;
};

// One full-batch cross-entropy epoch, gradients averaged over samples.
double ce_epoch_step(BottleneckModel& model, BottleneckTrainer& trainer,
                     const DenseMatrix& features, const std::vector<std::uint64_t>& labels,
                     double lr) {
    const std::size_t n = features.cols();
    DenseMatrix g1(model.w1.rows(), model.w1.cols(), 0.0);
    DenseMatrix g2(model.w2.rows(), model.w2.cols(), 0.0);
    DenseVector gb(model.with_bias ? model.classes() : 0, 0.0);

    double mean_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        DenseVector x = column(features, i);
        DenseVector hidden = affine(model.w1, x);
        DenseVector logits =
            model.with_bias ? affine(model.w2, hidden, model.bias) : affine(model.w2, hidden);
        ScalarLoss sl = cross_entropy_loss(logits, labels[i]);
        mean_loss += sl.value;

        add_outer(g2, sl.grad, hidden);
        if (model.with_bias) {
            for (std::size_t r = 0; r < sl.grad.size(); ++r) gb[r] += sl.grad[r];
        }
        DenseVector dh(hidden.size(), 0.0);
        for (std::size_t r = 0; r < model.w2.rows(); ++r) {
            const double gr = sl.grad[r];
            if (gr == 0.0) continue;
            const double* row = model.w2.row(r);
            for (std::size_t c = 0; c < dh.size(); ++c) dh[c] += gr * row[c];
        }
        add_outer(g1, dh, x);
    }

    const double inv = 1.0 / static_cast<double>(n);
    mean_loss *= inv;
    for (double& v : g1.values()) v *= inv;
    for (double& v : g2.values()) v *= inv;
    for (double& v : gb) v *= inv;

    trainer.a1.step(model.w1.data(), g1.data(), g1.size(), lr);
    trainer.a2.step(model.w2.data(), g2.data(), g2.size(), lr);
    if (model.with_bias) trainer.ab.step(model.bias.data(), gb.data(), gb.size(), lr);
    return mean_loss;
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t total) {
    if (total <= 1) return lr0;
    double t = static_cast<double>(epoch) / static_cast<double>(total - 1);
    return lr0 * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

}  // namespace

double bottleneck_accuracy(const BottleneckModel& model, const DenseMatrix& features,
                           const std::vector<std::uint64_t>& labels) {
    if (features.cols() != labels.size()) {
        throw ValidationError("bottleneck_accuracy: sample count mismatch");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        DenseVector logits = model.forward(column(features, i));
        if (argmax_first(logits) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double train_bottleneck_ce(BottleneckModel& model, const DenseMatrix& features,
                           const std::vector<std::uint64_t>& labels, std::size_t epochs,
                           double lr0) {
    if (features.cols() != labels.size()) {
        throw ValidationError("train_bottleneck_ce: sample count mismatch");
    }
    BottleneckTrainer trainer(model);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        ce_epoch_step(model, trainer, features, labels, cosine_lr(lr0, epoch, epochs));
    }
    return bottleneck_accuracy(model, features, labels);
}

// ---------------------------------------------------------------------------
// Gaussian rank experiment

std::vector<EpochStat> run_gaussian_rank_experiment(TheoryLoss kind,
                                                    const GaussianRankOptions& options) {
    SparseDataset data = gen_gaussian_classification(options.samples, options.feature_dim,
                                                     options.classes, options.seed);
    DenseMatrix features(options.feature_dim, options.samples);
    std::vector<std::uint64_t> labels(options.samples);
    DenseMatrix targets(options.classes, options.samples, 0.0);
    for (std::size_t i = 0; i < options.samples; ++i) {
        DenseVector x = to_dense(data.examples[i], options.feature_dim);
        for (std::size_t d = 0; d < options.feature_dim; ++d) features(d, i) = x[d];
        labels[i] = data.examples[i].labels.front();
        targets(labels[i], i) = 1.0;
    }

    BottleneckModel model = bottleneck_model(options.feature_dim, options.bottleneck_dim,
                                             options.classes, options.seed + 1, true);

    double lr0 = options.learning_rate;
    if (lr0 <= 0.0) {
        lr0 = kind == TheoryLoss::CrossEntropy ? 0.1 : 0.05;
    }

    auto measure = [&](std::size_t epoch) {
        EpochStat stat;
        stat.epoch = epoch;
        std::size_t hits = 0;
        DenseMatrix probs(options.samples, options.classes);
        for (std::size_t i = 0; i < options.samples; ++i) {
            DenseVector logits = model.forward(column(features, i));
            if (argmax_first(logits) == labels[i]) ++hits;
            DenseVector p = softmax(logits);
            for (std::size_t j = 0; j < p.size(); ++j) probs(i, j) = p[j];
        }
        stat.accuracy = static_cast<double>(hits) / static_cast<double>(options.samples);
        stat.softmax_rank = numerical_rank(probs, options.rank_tolerance);
        return stat;
    };

    std::vector<EpochStat> trajectory;
    const std::size_t stride = std::max<std::size_t>(1, options.rank_stride);
    BottleneckTrainer trainer(model);
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        double lr = cosine_lr(lr0, epoch - 1, options.epochs);
        if (kind == TheoryLoss::CrossEntropy) {
            ce_epoch_step(model, trainer, features, labels, lr);
        } else {
            // Mean-scaled residual gradient keeps one learning-rate scale
            // across sample counts.
            DenseVector bias_grad;
            FrobeniusGrads g = frobenius_grads(model, features, targets,
                                               model.with_bias ? &bias_grad : nullptr);
            const double inv = 1.0 / static_cast<double>(options.samples);
            for (double& v : g.g1.values()) v *= inv;
            for (double& v : g.g2.values()) v *= inv;
            for (double& v : bias_grad) v *= inv;
            trainer.a1.step(model.w1.data(), g.g1.data(), g.g1.size(), lr);
            trainer.a2.step(model.w2.data(), g.g2.data(), g.g2.size(), lr);
            if (model.with_bias) {
                trainer.ab.step(model.bias.data(), bias_grad.data(), bias_grad.size(), lr);
            }
        }
        if (epoch == 1 || epoch == options.epochs || epoch % stride == 0) {
            trajectory.push_back(measure(epoch));
        }
    }
    return trajectory;
}

// ---------------------------------------------------------------------------
// Softmax perturbation bound

BoundCheck softmax_perturbation_bound(const DenseMatrix& w_star, const DenseMatrix& delta,
                                      const DenseMatrix& features) {
    if (!w_star.same_shape(delta)) {
        throw ValidationError("softmax_perturbation_bound: weight and delta shapes differ");
    }
    if (w_star.cols() != features.rows()) {
        throw ValidationError("softmax_perturbation_bound: weights are " +
                              std::to_string(w_star.rows()) + "x" + std::to_string(w_star.cols()) +
                              " but features have " + std::to_string(features.rows()) + " rows");
    }

    const std::size_t classes = w_star.rows();
    const std::size_t n = features.cols();

    BoundCheck out;
    DenseVector delta_bar(classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        DenseVector x = column(features, i);
        DenseVector base(classes), shifted(classes);
        for (std::size_t j = 0; j < classes; ++j) {
            double zj = 0.0, dj = 0.0;
            const double* wj = w_star.row(j);
            const double* qj = delta.row(j);
            for (std::size_t d = 0; d < x.size(); ++d) {
                zj += wj[d] * x[d];
                dj += qj[d] * x[d];
            }
            base[j] = zj;
            shifted[j] = zj + dj;
            delta_bar[j] = std::max(delta_bar[j], std::abs(dj));
        }
        DenseVector p = softmax(base);
        DenseVector q = softmax(shifted);
        for (std::size_t j = 0; j < classes; ++j) out.error += std::abs(q[j] - p[j]);
    }
    out.error /= static_cast<double>(n);

    for (std::size_t j = 0; j < classes; ++j) out.bound += std::expm1(delta_bar[j]);
    out.holds = out.error <= out.bound;
    return out;
}

// ---------------------------------------------------------------------------
// Rank-G additive combination

DenseVector grouped_mhe_cp_output(const std::vector<std::vector<DenseVector>>& groups) {
    if (groups.empty()) throw ValidationError("grouped_mhe_cp_output: no groups");
    for (std::size_t g = 1; g < groups.size(); ++g) {
        if (groups[g].size() != groups[0].size()) {
            throw ValidationError("group " + std::to_string(g + 1) + " has " +
                                  std::to_string(groups[g].size()) + " heads, expected " +
                                  std::to_string(groups[0].size()));
        }
        for (std::size_t h = 0; h < groups[g].size(); ++h) {
            if (groups[g][h].size() != groups[0][h].size()) {
                throw ValidationError("head " + std::to_string(h + 1) + " length differs between "
                                      "groups (" + std::to_string(groups[g][h].size()) + " vs " +
                                      std::to_string(groups[0][h].size()) + ")");
            }
        }
    }
    DenseVector sum = kronecker_combine(groups[0]);
    for (std::size_t g = 1; g < groups.size(); ++g) {
        DenseVector term = kronecker_combine(groups[g]);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += term[i];
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Saddle probe

void gaussian_onehot_problem(std::size_t samples, std::size_t dim, std::uint64_t classes,
                             std::uint64_t seed, DenseMatrix& features, DenseMatrix& targets,
                             std::vector<std::uint64_t>* labels) {
    if (samples == 0 || dim == 0 || classes == 0) {
        throw ValidationError("gaussian_onehot_problem: sizes must be positive");
    }
    Rng rng(seed);
    features = DenseMatrix(dim, samples);
    targets = DenseMatrix(classes, samples, 0.0);
    if (labels != nullptr) labels->assign(samples, 0);
    for (std::size_t i = 0; i < samples; ++i) {
        for (std::size_t d = 0; d < dim; ++d) features(d, i) = rng.normal();
        std::uint64_t y = static_cast<std::uint64_t>(i) % classes;
        targets(y, i) = 1.0;
        if (labels != nullptr) (*labels)[i] = y;
    }
}

SaddleReport saddle_probe(const BottleneckModel& converged, const DenseMatrix& features,
                          const DenseMatrix& targets, const SaddleOptions& options) {
    double baseline_grad = frobenius_gradient_norm(converged, features, targets);
    if (baseline_grad >= 1e-6) {
        throw ValidationError("saddle_probe: model is not converged (gradient norm " +
                              std::to_string(baseline_grad) + " >= 1e-6)");
    }

    SaddleReport report;
    report.baseline_loss = frobenius_loss_value(converged, features, targets);
    report.best_loss = report.baseline_loss;

    Rng rng(options.seed);
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
        BottleneckModel probe = converged;
        for (double& v : probe.w1.values()) v += options.perturbation_scale * rng.normal();
        for (double& v : probe.w2.values()) v += options.perturbation_scale * rng.normal();
        if (probe.with_bias) {
            for (double& v : probe.bias) v += options.perturbation_scale * rng.normal();
        }
        FrobeniusTrainResult r = train_frobenius(probe, features, targets, options.lr,
                                                 options.max_iterations, options.grad_tol);
        report.redescended_losses.push_back(r.loss);
        if (r.loss < report.best_loss - 1e-9) report.escape_found = true;
        report.best_loss = std::min(report.best_loss, r.loss);
    }
    return report;
}

}  // namespace mhe
