// Copyright 2026 The copl Authors.
//
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

#ifndef COPL_SEEDS_HPP_
#define COPL_SEEDS_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace copl {

using Rng = std::mt19937_64;

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes);

std::uint64_t splitmix64(std::uint64_t x);

// Seed for a named pipeline stage. Adding a stage never shifts the
// randomness drawn by other stages.
std::uint64_t stage_seed(std::uint64_t master_seed, std::string_view stage);

// Independent per-entity stream, e.g. one per user.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace copl

#endif  // COPL_SEEDS_HPP_
