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

namespace mhe {

// A ranked answer: labels sorted by score descending, ties stable by
// ascending label index, labels pairwise distinct.
struct PredictionSet {
    std::vector<std::uint64_t> labels;
    std::vector<double> scores;

    std::size_t size() const { return labels.size(); }
};

}  // namespace mhe
