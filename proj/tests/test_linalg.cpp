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

#include <cmath>

#include "doctest.h"
#include "mhe/errors.hpp"
#include "mhe/linalg.hpp"
#include "test_support.hpp"

#ifdef MHE_HAVE_EIGEN
#include <Eigen/Dense>
#include <Eigen/SVD>
#endif

using namespace mhe;

TEST_CASE("affine products") {
    DenseMatrix id = DenseMatrix::identity(2);
    CHECK(affine(id, {3.0, 4.0}) == DenseVector{3.0, 4.0});

    DenseMatrix zeros(2, 2, 0.0);
    CHECK(affine(zeros, {3.0, 4.0}, {1.0, 2.0}) == DenseVector{1.0, 2.0});

    DenseMatrix w(2, 2);
    w(0, 0) = 1; w(0, 1) = 2; w(1, 0) = 3; w(1, 1) = 4;
    CHECK(affine(w, {1.0, 1.0}, {0.0, 0.0}) == DenseVector{3.0, 7.0});

    CHECK_THROWS_AS(affine(w, {1.0, 2.0, 3.0}), ValidationError);
    CHECK_THROWS_AS(affine(w, {1.0, 2.0}, {1.0}), ValidationError);
}

TEST_CASE("softmax behaves like a probability map") {
    DenseVector flat = softmax({2.5, 2.5, 2.5});
    for (double p : flat) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Low temperature approaches argmax selection.
    DenseVector sharp = softmax({1.0, 2.0}, 0.01);
    CHECK(sharp[1] > 1.0 - 1e-10);

    DenseVector closed = softmax({0.0, std::log(3.0)});
    CHECK(closed[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(closed[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        DenseVector o(7);
        for (double& v : o) v = rng.uniform(-30.0, 30.0);
        DenseVector p = softmax(o);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);

        DenseVector shifted = o;
        for (double& v : shifted) v += 123.25;
        DenseVector q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(softmax({1.0}, 0.0), ValidationError);
}

TEST_CASE("cross entropy value and gradient") {
    ScalarLoss sl = cross_entropy_loss({0.0, 0.0}, 0);
    CHECK(sl.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(sl.grad[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(sl.grad[1] == doctest::Approx(0.5).epsilon(1e-12));

    // Dominant target logit drives the loss to zero.
    CHECK(cross_entropy_loss({50.0, 0.0, 0.0}, 0).value < 1e-12);

    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        DenseVector logits(5);
        for (double& v : logits) v = rng.uniform(-2.0, 2.0);
        std::uint64_t target = rng.below(5);
        ScalarLoss loss = cross_entropy_loss(logits, target);
        DenseVector fd = finite_difference_gradient(
            [&](const DenseVector& z) { return cross_entropy_loss(z, target).value; }, logits);
        CHECK(test::gradient_mismatch(loss.grad, fd) < 1e-6);
    }

    CHECK_THROWS_AS(cross_entropy_loss({0.0, 0.0}, 2), ValidationError);
}

TEST_CASE("binary cross entropy value and gradient") {
    CHECK(bce_with_sigmoid_loss({0.0}, {1.0}).value ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    ScalarLoss sl = bce_with_sigmoid_loss({0.0, 0.0}, {0.0, 1.0});
    CHECK(sl.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(sl.grad[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(sl.grad[1] == doctest::Approx(-0.25).epsilon(1e-12));

    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        DenseVector logits(6);
        DenseVector targets(6);
        for (std::size_t i = 0; i < 6; ++i) {
            logits[i] = rng.uniform(-3.0, 3.0);
            targets[i] = rng.below(2) ? 1.0 : 0.0;
        }
        ScalarLoss loss = bce_with_sigmoid_loss(logits, targets);
        DenseVector fd = finite_difference_gradient(
            [&](const DenseVector& z) { return bce_with_sigmoid_loss(z, targets).value; }, logits);
        CHECK(test::gradient_mismatch(loss.grad, fd) < 1e-6);
    }

    CHECK_THROWS_AS(bce_with_sigmoid_loss({0.0}, {0.5}), ValidationError);
    CHECK_THROWS_AS(bce_with_sigmoid_loss({0.0}, {0.0, 1.0}), ValidationError);
}

TEST_CASE("frobenius loss") {
    DenseMatrix a(2, 2, 1.0), b(2, 2, 1.0);
    MatrixLoss same = frobenius_loss(a, b);
    CHECK(same.value == 0.0);
    for (double v : same.grad.values()) CHECK(v == 0.0);

    DenseMatrix c(2, 2, 2.0);
    CHECK(frobenius_loss(c, b).value == doctest::Approx(2.0));

    Rng rng(9);
    DenseMatrix pred(3, 4), target(3, 4);
    for (double& v : pred.values()) v = rng.normal();
    for (double& v : target.values()) v = rng.normal();
    MatrixLoss loss = frobenius_loss(pred, target);
    DenseVector fd = finite_difference_gradient(
        [&](const DenseVector& flat) {
            return frobenius_loss(test::unflatten(flat, 3, 4), target).value;
        },
        test::flatten(pred));
    CHECK(test::gradient_mismatch(loss.grad.values(), fd) < 1e-6);

    CHECK_THROWS_AS(frobenius_loss(DenseMatrix(2, 2), DenseMatrix(2, 3)), ValidationError);
}

TEST_CASE("sgd step arithmetic") {
    DenseMatrix params(2, 2, 1.0);
    sgd_step(params, DenseMatrix(2, 2, 0.0), 0.5);
    for (double v : params.values()) CHECK(v == 1.0);

    DenseMatrix zero(2, 2, 0.0);
    sgd_step(zero, DenseMatrix(2, 2, 1.0), 0.1);
    for (double v : zero.values()) CHECK(v == doctest::Approx(-0.1));

    // Two half-steps equal one full step for a constant gradient.
    DenseMatrix twice(2, 2, 0.0), once(2, 2, 0.0), grad(2, 2, 3.0);
    sgd_step(twice, grad, 0.05);
    sgd_step(twice, grad, 0.05);
    sgd_step(once, grad, 0.1);
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(twice.values()[i] == doctest::Approx(once.values()[i]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(sgd_step(zero, DenseMatrix(1, 2, 0.0), 0.1), ValidationError);
}

TEST_CASE("numerical rank") {
    CHECK(numerical_rank(DenseMatrix::identity(7)) == 7);

    // Outer product of two nonzero vectors.
    DenseMatrix outer(4, 5, 0.0);
    DenseVector u{1.0, -2.0, 0.5, 3.0}, v{2.0, 1.0, -1.0, 0.25, 4.0};
    add_outer(outer, u, v);
    CHECK(numerical_rank(outer) == 1);

    // 20x20 whose last five rows duplicate the first five: rank <= 15.
    Rng rng(4);
    DenseMatrix dup(20, 20);
    for (double& x : dup.values()) x = rng.normal();
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 20; ++c) dup(15 + r, c) = dup(r, c);
    CHECK(numerical_rank(dup) <= 15);

    CHECK_THROWS_AS(numerical_rank(DenseMatrix(2, 2), 0.0), ValidationError);
}

#ifdef MHE_HAVE_EIGEN
TEST_CASE("singular values agree with an independent implementation") {
    Rng rng(21);
    for (auto [rows, cols] : {std::pair<int, int>{12, 12}, {20, 7}, {5, 16}}) {
        DenseMatrix m(rows, cols);
        for (double& v : m.values()) v = rng.normal();

        DenseVector mine = singular_values(m);

        Eigen::MatrixXd em(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) em(r, c) = m(r, c);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(em);
        Eigen::VectorXd theirs = svd.singularValues();

        REQUIRE(mine.size() == static_cast<std::size_t>(theirs.size()));
        for (std::size_t i = 0; i < mine.size(); ++i) {
            CHECK(mine[i] == doctest::Approx(theirs[i]).epsilon(1e-10));
        }
    }
}
#endif

TEST_CASE("svd factors reconstruct the matrix") {
    Rng rng(31);
    DenseMatrix m(9, 6);
    for (double& v : m.values()) v = rng.normal();
    Svd svd = jacobi_svd(m);

    // U diag(sigma) V^T == M
    DenseMatrix us = svd.u;
    for (std::size_t r = 0; r < us.rows(); ++r)
        for (std::size_t c = 0; c < us.cols(); ++c) us(r, c) *= svd.sigma[c];
    DenseMatrix rec = matmul(us, transpose(svd.v));
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(rec.values()[i] == doctest::Approx(m.values()[i]).epsilon(1e-10));
    }
}

TEST_CASE("rng streams are deterministic and platform-independent in form") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // Known SplitMix64 output for seed 1234567.
    Rng c(1234567);
    CHECK(c.next_u64() == 6457827717110365317ULL);

    Rng d(42);
    Rng child = d.fork();
    CHECK(child.next_u64() != d.next_u64());

    Rng n(7);
    double mean = 0.0;
    for (int i = 0; i < 10000; ++i) mean += n.normal();
    CHECK(std::abs(mean / 10000.0) < 0.05);
}
