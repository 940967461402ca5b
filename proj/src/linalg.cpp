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

#include "mhe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mhe/errors.hpp"

namespace mhe {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    std::ostringstream os;
    os << r << "x" << c;
    return os.str();
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void DenseMatrix::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t Rng::next_u64() {
    // SplitMix64 (Steele, Lea, Flood 2014).
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    // Marsaglia polar method; discards the spare so the stream consumption
    // per sample depends only on the rejection pattern.
    for (;;) {
        double u = 2.0 * uniform() - 1.0;
        double v = 2.0 * uniform() - 1.0;
        double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            return u * std::sqrt(-2.0 * std::log(s) / s);
        }
    }
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ValidationError("Rng::below: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Rng Rng::fork() {
    return Rng(next_u64());
}

// ---------------------------------------------------------------------------
// Elementary operations

double dot(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) {
        throw ValidationError("dot: length " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

DenseVector affine(const DenseMatrix& w, const DenseVector& x) {
    if (w.cols() != x.size()) {
        throw ValidationError("affine: weight is " + shape_str(w.rows(), w.cols()) +
                              " but input has length " + std::to_string(x.size()));
    }
    DenseVector out(w.rows(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* wr = w.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) s += wr[c] * x[c];
        out[r] = s;
    }
    return out;
}

DenseVector affine(const DenseMatrix& w, const DenseVector& x, const DenseVector& b) {
    if (b.size() != w.rows()) {
        throw ValidationError("affine: weight is " + shape_str(w.rows(), w.cols()) +
                              " but bias has length " + std::to_string(b.size()));
    }
    DenseVector out = affine(w, x);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += b[r];
    return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul: " + shape_str(a.rows(), a.cols()) + " times " +
                              shape_str(b.rows(), b.cols()));
    }
    DenseMatrix out(a.rows(), b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

void add_outer(DenseMatrix& grad, const DenseVector& u, const DenseVector& v, double scale) {
    if (grad.rows() != u.size() || grad.cols() != v.size()) {
        throw ValidationError("add_outer: grad is " + shape_str(grad.rows(), grad.cols()) +
                              ", vectors are " + std::to_string(u.size()) + " and " +
                              std::to_string(v.size()));
    }
    for (std::size_t r = 0; r < u.size(); ++r) {
        double ur = u[r] * scale;
        if (ur == 0.0) continue;
        double* row = grad.row(r);
        for (std::size_t c = 0; c < v.size(); ++c) row[c] += ur * v[c];
    }
}

DenseVector softmax(const DenseVector& o, double temperature) {
    if (temperature <= 0.0) throw ValidationError("softmax: temperature must be positive");
    if (o.empty()) throw ValidationError("softmax: empty input");
    double m = *std::max_element(o.begin(), o.end());
    DenseVector out(o.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
        out[i] = std::exp((o[i] - m) / temperature);
        sum += out[i];
    }
    for (double& e : out) e /= sum;
    return out;
}

DenseVector sigmoid(const DenseVector& o) {
    DenseVector out(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
        double z = o[i];
        out[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                          : std::exp(z) / (1.0 + std::exp(z));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Losses

ScalarLoss cross_entropy_loss(const DenseVector& logits, std::uint64_t target) {
    if (target >= logits.size()) {
        throw ValidationError("cross_entropy_loss: target " + std::to_string(target) +
                              " out of range for " + std::to_string(logits.size()) + " logits");
    }
    double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    double lse = m + std::log(sum);

    ScalarLoss out;
    out.value = lse - logits[target];
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - lse);
    }
    out.grad[target] -= 1.0;
    return out;
}

ScalarLoss bce_with_sigmoid_loss(const DenseVector& logits, const DenseVector& targets) {
    if (logits.size() != targets.size()) {
        throw ValidationError("bce_with_sigmoid_loss: " + std::to_string(logits.size()) +
                              " logits vs " + std::to_string(targets.size()) + " targets");
    }
    if (logits.empty()) throw ValidationError("bce_with_sigmoid_loss: empty input");
    const double n = static_cast<double>(logits.size());
    ScalarLoss out;
    out.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double t = targets[i];
        if (t != 0.0 && t != 1.0) {
            throw ValidationError("bce_with_sigmoid_loss: target at " + std::to_string(i) +
                                  " is " + std::to_string(t) + ", expected 0 or 1");
        }
        double z = logits[i];
        // max(z,0) - z t + log(1 + exp(-|z|)) is the overflow-free form.
        out.value += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        out.grad[i] = (s - t) / n;
    }
    out.value /= n;
    return out;
}

MatrixLoss frobenius_loss(const DenseMatrix& prediction, const DenseMatrix& target) {
    if (!prediction.same_shape(target)) {
        throw ValidationError("frobenius_loss: " + shape_str(prediction.rows(), prediction.cols()) +
                              " vs " + shape_str(target.rows(), target.cols()));
    }
    MatrixLoss out;
    out.grad = DenseMatrix(prediction.rows(), prediction.cols());
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        double d = prediction.values()[i] - target.values()[i];
        out.grad.values()[i] = d;
        out.value += 0.5 * d * d;
    }
    return out;
}

void sgd_step(DenseMatrix& params, const DenseMatrix& grad, double lr) {
    if (!params.same_shape(grad)) {
        throw ValidationError("sgd_step: params " + shape_str(params.rows(), params.cols()) +
                              " vs grad " + shape_str(grad.rows(), grad.cols()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) params.values()[i] -= lr * grad.values()[i];
}

void sgd_step(DenseVector& params, const DenseVector& grad, double lr) {
    if (params.size() != grad.size()) {
        throw ValidationError("sgd_step: params length " + std::to_string(params.size()) +
                              " vs grad length " + std::to_string(grad.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

// ---------------------------------------------------------------------------
// One-sided Jacobi SVD

namespace {

// Works on a tall copy (rows >= cols); rotations accumulate into v.
void jacobi_sweep_svd(DenseMatrix& a, DenseMatrix& v) {
    const std::size_t n = a.cols();
    const std::size_t m = a.rows();
    const double tol = 1e-14;
    const int max_sweeps = 64;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    double ip = a(i, p), iq = a(i, q);
                    app += ip * ip;
                    aqq += iq * iq;
                    apq += ip * iq;
                }
                double denom = std::sqrt(app * aqq);
                if (denom == 0.0 || std::abs(apq) <= tol * denom) continue;
                rotated = true;

                double zeta = (aqq - app) / (2.0 * apq);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;

                for (std::size_t i = 0; i < m; ++i) {
                    double ip = a(i, p), iq = a(i, q);
                    a(i, p) = c * ip - s * iq;
                    a(i, q) = s * ip + c * iq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
}

}  // namespace

Svd jacobi_svd(const DenseMatrix& m) {
    if (m.rows() == 0 || m.cols() == 0) throw ValidationError("jacobi_svd: empty matrix");

    const bool flipped = m.rows() < m.cols();
    DenseMatrix a = flipped ? transpose(m) : m;
    DenseMatrix v = DenseMatrix::identity(a.cols());
    jacobi_sweep_svd(a, v);

    const std::size_t n = a.cols();
    const std::size_t rows = a.rows();
    DenseVector sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += a(i, j) * a(i, j);
        sigma[j] = std::sqrt(s);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.sigma.resize(n);
    out.u = DenseMatrix(rows, n);
    out.v = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t src = order[j];
        out.sigma[j] = sigma[src];
        double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (std::size_t i = 0; i < rows; ++i) out.u(i, j) = a(i, src) * inv;
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    }
    if (flipped) std::swap(out.u, out.v);
    return out;
}

DenseVector singular_values(const DenseMatrix& m) {
    return jacobi_svd(m).sigma;
}

std::size_t numerical_rank(const DenseMatrix& m, double rel_tolerance) {
    if (rel_tolerance <= 0.0) throw ValidationError("numerical_rank: tolerance must be positive");
    DenseVector sigma = singular_values(m);
    if (sigma.empty() || sigma[0] == 0.0) return 0;
    double cutoff = rel_tolerance * sigma[0];
    std::size_t rank = 0;
    for (double s : sigma) {
        if (s > cutoff) ++rank;
    }
    return rank;
}

DenseVector finite_difference_gradient(const std::function<double(const DenseVector&)>& f,
                                       const DenseVector& at, double step) {
    DenseVector grad(at.size(), 0.0);
    DenseVector x = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        double orig = x[i];
        x[i] = orig + step;
        double hi = f(x);
        x[i] = orig - step;
        double lo = f(x);
        x[i] = orig;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

}  // namespace mhe
