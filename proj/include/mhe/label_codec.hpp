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

using GlobalLabel = std::uint64_t;
using LocalLabels = std::vector<std::uint64_t>;

// Ordered head widths. The plan is a mixed-radix number system: head 1 is
// the most significant digit, so a global label decomposes into digits the
// way an integer decomposes in a positional system with per-position bases.
class HeadPlan {
public:
    explicit HeadPlan(std::vector<std::uint64_t> lengths);

    const std::vector<std::uint64_t>& lengths() const { return lengths_; }
    std::size_t heads() const { return lengths_.size(); }
    std::uint64_t length(std::size_t h) const { return lengths_[h]; }

    // Product of all lengths, computed with overflow checks at construction.
    std::uint64_t capacity() const { return capacity_; }

    // Product of the first h lengths (the number of distinct prefixes after
    // stage h of a cascade). prefix_capacity(0) == 1.
    std::uint64_t prefix_capacity(std::size_t h) const;

    bool operator==(const HeadPlan& other) const { return lengths_ == other.lengths_; }

private:
    std::vector<std::uint64_t> lengths_;
    std::uint64_t capacity_ = 1;
};

// Mixed-radix digits of `label`, most significant head first.
// Throws ValidationError when label >= plan.capacity().
LocalLabels decompose(GlobalLabel label, const HeadPlan& plan);

// Exact inverse of decompose: sum of digit * (product of subsequent lengths).
GlobalLabel combine(const LocalLabels& locals, const HeadPlan& plan);

inline constexpr std::uint64_t kKroneckerCapacityGuard = 10'000'000;

// Full Kronecker product O^1 (x) ... (x) O^H, flattened with the same index
// convention as combine: element g equals the product of each head's entry
// at digit decompose(g)[h]. Guarded: this is the brute-force oracle and is
// only meant for small instances.
DenseVector kronecker_combine(const std::vector<DenseVector>& outputs,
                              std::uint64_t capacity_guard = kKroneckerCapacityGuard);

struct ArgmaxEquivalence {
    GlobalLabel kron_argmax = 0;      // argmax over the materialized product
    GlobalLabel combined_argmax = 0;  // combine() of the per-head argmaxes
    bool consistent = false;
};

// Checks that combining per-head argmaxes equals the argmax of the full
// Kronecker product. Requires strictly positive entries and a unique
// maximum in every head (a tie raises TieError rather than being broken
// silently: the equivalence is only guaranteed for unique maxima).
ArgmaxEquivalence oracle_argmax_equivalence(const std::vector<DenseVector>& outputs,
                                            std::uint64_t capacity_guard = kKroneckerCapacityGuard);

// Vector of zeros with a single 1.0 at `index`.
DenseVector one_hot(GlobalLabel index, std::size_t width);

// Index of the first maximal element (ties broken toward the lower index).
std::size_t argmax_first(const DenseVector& v);

// Index of the unique maximal element; throws TieError when it is not unique.
std::size_t argmax_strict(const DenseVector& v);

}  // namespace mhe
