// Copyright 2026 The viewseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "viewseg/optim.hpp"
#include "viewseg/viewnet.hpp"

namespace viewseg {
namespace {

struct Toy {
  std::vector<double> a;
  std::vector<double> b;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, Toy>
void for_each_block(P& p, F&& fn) {
  using Span = std::conditional_t<std::is_const_v<P>, std::span<const double>, std::span<double>>;
  fn("a", Span(p.a));
  fn("b", Span(p.b));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.1, v = 0.001; bias-corrected both give 1, so the step is lr / (1 + eps).
  Toy p{{0.0}, {}};
  const Toy g{{1.0}, {}};
  AdamState s;
  adam_step(p, g, s, AdamConfig{0.001});
  EXPECT_NEAR(p.a[0], -0.001 / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  Toy p{{1.0, -2.0}, {3.0}};
  const Toy before = p;
  const Toy g{{0.0, 0.0}, {0.0}};
  AdamState s;
  for (int i = 0; i < 100; ++i) adam_step(p, g, s);
  EXPECT_EQ(p.a, before.a);
  EXPECT_EQ(p.b, before.b);
}

TEST(Adam, Deterministic) {
  Toy p1{{0.5, 0.25}, {1.0}}, p2 = p1;
  const Toy g{{0.3, -0.7}, {2.0}};
  AdamState s1, s2;
  for (int i = 0; i < 5; ++i) {
    adam_step(p1, g, s1);
    adam_step(p2, g, s2);
  }
  EXPECT_EQ(p1.a, p2.a);
  EXPECT_EQ(p1.b, p2.b);
  EXPECT_TRUE(s1 == s2);
}

TEST(Adam, NonFiniteGradientNamesBlockAndLeavesParams) {
  Toy p{{1.0}, {2.0}};
  const Toy g{{0.0}, {std::nan("")}};
  AdamState s;
  try {
    adam_step(p, g, s);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(p.b[0], 2.0);
  EXPECT_EQ(s.step, 0);
}

TEST(Adam, ShapeMismatchIsRejected) {
  Toy p{{1.0}, {2.0}};
  const Toy g{{1.0, 2.0}, {2.0}};
  AdamState s;
  EXPECT_THROW(adam_step(p, g, s), ConfigError);
}

TEST(Adam, BlockNamesOfViewNet) {
  Architecture a;
  a.ic = {{6, 4, 2, true}};
  a.fc = {{4, 3, false}};
  const ViewNetParams p = zeros_like(a);
  std::vector<std::string> names;
  collect_blocks(p, &names);
  EXPECT_EQ(names, (std::vector<std::string>{"ic0.means", "ic0.raw_precisions", "ic0.mixing", "fc0.weight", "fc0.bias"}));
}

}  // namespace
}  // namespace viewseg
