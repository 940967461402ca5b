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

#include <stdexcept>
#include <string>

namespace mhe {

// Bad arguments, shape mismatches, out-of-range labels, malformed input.
// The CLI maps this family to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// File-system and serialization failures. CLI exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// A tied maximum where a unique one is required. Surfaced as its own type so
// callers can distinguish "the theorem does not apply" from a genuine failure.
class TieError : public ValidationError {
public:
    explicit TieError(const std::string& what) : ValidationError(what) {}
};

// An operation would materialize more memory than its guard permits.
class ResourceError : public ValidationError {
public:
    explicit ResourceError(const std::string& what) : ValidationError(what) {}
};

}  // namespace mhe
