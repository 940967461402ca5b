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

#include <string>

namespace mhe {

// The four classifier strategies. Vanilla is the one-hot baseline; the
// others factor the label space across multiple heads and differ in how
// the heads are combined (product, cascaded beam, sampled subset).
enum class Strategy {
    Vanilla = 0,
    Mhp = 1,
    Mhc = 2,
    Mhs = 3,
};

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

}  // namespace mhe
