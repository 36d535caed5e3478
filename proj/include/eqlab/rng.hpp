// Copyright 2026 The eqlab Authors
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

#pragma once

#include <cstdint>
#include <random>

namespace eqlab {

using Rng = std::mt19937_64;

// Independent, reproducible sub-streams of one run seed. Each consumer
// (data, sampler, loss, init) owns its own stream so that enabling a
// stochastic loss never perturbs batch composition.
enum class Stream : std::uint32_t {
  kData = 1,
  kTestData = 2,
  kInit = 3,
  kSampler = 4,
  kLoss = 5,
  kBackground = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace eqlab
