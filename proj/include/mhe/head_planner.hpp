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

#include "mhe/label_codec.hpp"
#include "mhe/strategy.hpp"

namespace mhe {

inline constexpr std::size_t kMaxPlannedHeads = 8;

// Confusion degree of a plan under a head arrangement:
//   D = prod_{h=2}^{H} (prod_{k=h}^{H} len[k]) / len[h-1]
// evaluated on the permuted lengths. Larger D means more mismatch risk from
// shared coordinate components; descending lengths minimize it.
// Requires H >= 2.
double confusion_degree(const HeadPlan& plan, const std::vector<std::size_t>& arrangement);
double confusion_degree(const HeadPlan& plan);  // identity arrangement

// Maximum of confusion_degree over all H! arrangements, H <= 8 (exhaustive).
double max_confusion_degree(const HeadPlan& plan);

// Chooses head lengths for num_classes categories:
//  - lengths are drawn from {floor(C^(1/H)), ceil(C^(1/H))} with the smallest
//    product covering C;
//  - Mhp orders them nondecreasing, Mhc/Mhs nonincreasing;
//  - H == 1 (or Vanilla) degenerates to a single head of length C.
HeadPlan plan_heads(std::uint64_t num_classes, std::size_t num_heads, Strategy strategy);

// Splits [0, num_classes) into num_heads contiguous near-equal ranges; the
// remainder goes to the last head. This is the additive partition the
// sampling strategy trains on (the heads jointly cover the label range by
// sum rather than by product).
HeadPlan equal_partition(std::uint64_t num_classes, std::size_t num_heads);

// Classifier parameters only: sum(lengths) * feature_dim, plus sum(lengths)
// when biases are counted. The backbone is excluded on purpose.
std::uint64_t parameter_count(const HeadPlan& plan, std::uint64_t feature_dim, bool with_bias);

}  // namespace mhe
