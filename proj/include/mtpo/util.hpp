// Copyright 2026 The mtpo Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MTPO_UTIL_HPP_
#define MTPO_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace mtpo {

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// %.17g: enough digits for an exact fp64 round trip through text.
std::string format_double(double value);
double parse_double(std::string_view text);

// splitmix64 finalizer; used to derive independent stream keys.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix_keys(std::initializer_list<std::uint64_t> keys);

// Thread cap for per-sample solver calls, read from MTPO_THREADS (default 1).
std::size_t solver_threads();
void set_solver_threads(std::size_t n);

// Runs body(i) for i in [0, n). Results must be written to per-index slots;
// the first exception is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace mtpo

#endif  // MTPO_UTIL_HPP_
