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

#include "mhe/label_codec.hpp"

#include <limits>
#include <string>

#include "mhe/errors.hpp"

namespace mhe {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
        throw ValidationError("head plan capacity overflows 64-bit range");
    }
    return a * b;
}

}  // namespace

HeadPlan::HeadPlan(std::vector<std::uint64_t> lengths) : lengths_(std::move(lengths)) {
    if (lengths_.empty()) throw ValidationError("head plan needs at least one head");
    for (std::size_t h = 0; h < lengths_.size(); ++h) {
        if (lengths_[h] == 0) {
            throw ValidationError("head " + std::to_string(h + 1) + " has zero length");
        }
        capacity_ = checked_mul(capacity_, lengths_[h]);
    }
}

std::uint64_t HeadPlan::prefix_capacity(std::size_t h) const {
    std::uint64_t p = 1;
    for (std::size_t i = 0; i < h && i < lengths_.size(); ++i) p *= lengths_[i];
    return p;
}

LocalLabels decompose(GlobalLabel label, const HeadPlan& plan) {
    if (label >= plan.capacity()) {
        throw ValidationError("global label " + std::to_string(label) +
                              " out of range for plan capacity " +
                              std::to_string(plan.capacity()));
    }
    const auto& lengths = plan.lengths();
    LocalLabels digits(lengths.size());
    std::uint64_t rest = label;
    std::uint64_t weight = plan.capacity();
    for (std::size_t h = 0; h < lengths.size(); ++h) {
        weight /= lengths[h];
        digits[h] = rest / weight;
        rest -= digits[h] * weight;
    }
    return digits;
}

GlobalLabel combine(const LocalLabels& locals, const HeadPlan& plan) {
    if (locals.size() != plan.heads()) {
        throw ValidationError("expected " + std::to_string(plan.heads()) +
                              " local labels, got " + std::to_string(locals.size()));
    }
    const auto& lengths = plan.lengths();
    std::uint64_t label = 0;
    for (std::size_t h = 0; h < lengths.size(); ++h) {
        if (locals[h] >= lengths[h]) {
            throw ValidationError("local label " + std::to_string(locals[h]) + " at head " +
                                  std::to_string(h + 1) + " exceeds length " +
                                  std::to_string(lengths[h]));
        }
        label = label * lengths[h] + locals[h];
    }
    return label;
}

DenseVector kronecker_combine(const std::vector<DenseVector>& outputs,
                              std::uint64_t capacity_guard) {
    if (outputs.empty()) throw ValidationError("kronecker_combine: no head outputs");
    std::uint64_t capacity = 1;
    for (const auto& o : outputs) {
        if (o.empty()) throw ValidationError("kronecker_combine: empty head output");
        capacity = checked_mul(capacity, o.size());
    }
    if (capacity > capacity_guard) {
        throw ResourceError("kronecker_combine: capacity " + std::to_string(capacity) +
                            " exceeds guard " + std::to_string(capacity_guard));
    }

    DenseVector result{1.0};
    for (const auto& o : outputs) {
        DenseVector next(result.size() * o.size());
        std::size_t at = 0;
        for (double r : result) {
            for (double v : o) next[at++] = r * v;
        }
        result = std::move(next);
    }
    return result;
}

ArgmaxEquivalence oracle_argmax_equivalence(const std::vector<DenseVector>& outputs,
                                            std::uint64_t capacity_guard) {
    std::vector<std::uint64_t> lengths;
    lengths.reserve(outputs.size());
    for (std::size_t h = 0; h < outputs.size(); ++h) {
        for (double v : outputs[h]) {
            if (!(v > 0.0)) {
                throw ValidationError("oracle_argmax_equivalence: head " + std::to_string(h + 1) +
                                      " contains a non-positive entry");
            }
        }
        lengths.push_back(outputs[h].size());
    }

    LocalLabels maxima(outputs.size());
    for (std::size_t h = 0; h < outputs.size(); ++h) {
        maxima[h] = argmax_strict(outputs[h]);
    }

    HeadPlan plan(lengths);
    ArgmaxEquivalence out;
    out.combined_argmax = combine(maxima, plan);
    out.kron_argmax = argmax_first(kronecker_combine(outputs, capacity_guard));
    out.consistent = out.kron_argmax == out.combined_argmax;
    return out;
}

DenseVector one_hot(GlobalLabel index, std::size_t width) {
    if (index >= width) {
        throw ValidationError("one_hot: index " + std::to_string(index) +
                              " out of range for width " + std::to_string(width));
    }
    DenseVector v(width, 0.0);
    v[index] = 1.0;
    return v;
}

std::size_t argmax_first(const DenseVector& v) {
    if (v.empty()) throw ValidationError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

std::size_t argmax_strict(const DenseVector& v) {
    std::size_t best = argmax_first(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i != best && v[i] == v[best]) {
            throw TieError("tied maximum at indices " + std::to_string(best) + " and " +
                           std::to_string(i));
        }
    }
    return best;
}

}  // namespace mhe
