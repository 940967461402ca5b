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

#include "mhe/head_planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mhe/errors.hpp"

namespace mhe {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Vanilla: return "vanilla";
        case Strategy::Mhp: return "mhp";
        case Strategy::Mhc: return "mhc";
        case Strategy::Mhs: return "mhs";
    }
    throw ValidationError("unknown strategy tag");
}

Strategy parse_strategy(const std::string& name) {
    if (name == "vanilla") return Strategy::Vanilla;
    if (name == "mhp") return Strategy::Mhp;
    if (name == "mhc") return Strategy::Mhc;
    if (name == "mhs") return Strategy::Mhs;
    throw ValidationError("unknown strategy '" + name + "' (expected vanilla|mhp|mhc|mhs)");
}

double confusion_degree(const HeadPlan& plan, const std::vector<std::size_t>& arrangement) {
    const std::size_t heads = plan.heads();
    if (heads < 2) throw ValidationError("confusion degree defined for H >= 2");
    if (arrangement.size() != heads) {
        throw ValidationError("arrangement has " + std::to_string(arrangement.size()) +
                              " entries for " + std::to_string(heads) + " heads");
    }
    std::vector<bool> seen(heads, false);
    std::vector<double> len(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        if (arrangement[i] >= heads || seen[arrangement[i]]) {
            throw ValidationError("arrangement is not a permutation of the heads");
        }
        seen[arrangement[i]] = true;
        len[i] = static_cast<double>(plan.length(arrangement[i]));
    }

    double degree = 1.0;
    for (std::size_t h = 1; h < heads; ++h) {
        double tail = 1.0;
        for (std::size_t k = h; k < heads; ++k) tail *= len[k];
        degree *= tail / len[h - 1];
    }
    return degree;
}

double confusion_degree(const HeadPlan& plan) {
    std::vector<std::size_t> identity(plan.heads());
    std::iota(identity.begin(), identity.end(), 0);
    return confusion_degree(plan, identity);
}

double max_confusion_degree(const HeadPlan& plan) {
    const std::size_t heads = plan.heads();
    if (heads < 2) throw ValidationError("confusion degree defined for H >= 2");
    if (heads > kMaxPlannedHeads) {
        throw ValidationError("arrangement search limited to " +
                              std::to_string(kMaxPlannedHeads) + " heads");
    }
    std::vector<std::size_t> perm(heads);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        best = std::max(best, confusion_degree(plan, perm));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

namespace {

// base^exp, saturating at limit+1 so the caller can compare against limit.
std::uint64_t pow_capped(std::uint64_t base, std::size_t exp, std::uint64_t limit) {
    unsigned __int128 p = 1;
    for (std::size_t i = 0; i < exp; ++i) {
        p *= base;
        if (p > limit) return limit + 1;
    }
    return static_cast<std::uint64_t>(p);
}

std::uint64_t integer_root_floor(std::uint64_t value, std::size_t degree) {
    if (value == 0) return 0;
    auto guess = static_cast<std::uint64_t>(
        std::floor(std::pow(static_cast<double>(value), 1.0 / static_cast<double>(degree))));
    if (guess == 0) guess = 1;
    while (pow_capped(guess + 1, degree, value) <= value) ++guess;
    while (guess > 1 && pow_capped(guess, degree, value) > value) --guess;
    return guess;
}

}  // namespace

HeadPlan plan_heads(std::uint64_t num_classes, std::size_t num_heads, Strategy strategy) {
    if (num_classes == 0) throw ValidationError("plan_heads: need at least one class");
    if (num_heads == 0 || num_heads > kMaxPlannedHeads) {
        throw ValidationError("plan_heads: head count must be in [1, " +
                              std::to_string(kMaxPlannedHeads) + "]");
    }
    if (strategy == Strategy::Vanilla && num_heads != 1) {
        throw ValidationError("plan_heads: the vanilla strategy has exactly one head");
    }
    if (num_heads == 1) return HeadPlan({num_classes});

    const std::uint64_t lo = std::max<std::uint64_t>(1, integer_root_floor(num_classes, num_heads));
    const std::uint64_t hi = lo + 1;

    // Smallest k such that lo^(H-k) * hi^k covers the classes.
    std::vector<std::uint64_t> lengths;
    for (std::size_t k = 0; k <= num_heads; ++k) {
        unsigned __int128 product = 1;
        for (std::size_t i = 0; i < num_heads - k; ++i) product *= lo;
        for (std::size_t i = 0; i < k; ++i) product *= hi;
        if (product >= num_classes) {
            lengths.assign(num_heads - k, lo);
            lengths.insert(lengths.end(), k, hi);
            break;
        }
    }

    if (strategy == Strategy::Mhp) {
        std::sort(lengths.begin(), lengths.end());
    } else {
        std::sort(lengths.begin(), lengths.end(), std::greater<>());
    }
    return HeadPlan(std::move(lengths));
}

HeadPlan equal_partition(std::uint64_t num_classes, std::size_t num_heads) {
    if (num_classes == 0) throw ValidationError("equal_partition: need at least one class");
    if (num_heads == 0) throw ValidationError("equal_partition: need at least one head");
    if (num_heads > num_classes) {
        throw ValidationError("equal_partition: more heads (" + std::to_string(num_heads) +
                              ") than classes (" + std::to_string(num_classes) + ")");
    }
    std::uint64_t base = num_classes / num_heads;
    std::vector<std::uint64_t> lengths(num_heads, base);
    lengths.back() += num_classes % num_heads;
    return HeadPlan(std::move(lengths));
}

std::uint64_t parameter_count(const HeadPlan& plan, std::uint64_t feature_dim, bool with_bias) {
    unsigned __int128 total_length = 0;
    for (std::uint64_t len : plan.lengths()) total_length += len;
    unsigned __int128 count = total_length * feature_dim;
    if (with_bias) count += total_length;
    if (count > std::numeric_limits<std::uint64_t>::max()) {
        throw ValidationError("parameter count overflows 64-bit range");
    }
    return static_cast<std::uint64_t>(count);
}

}  // namespace mhe
