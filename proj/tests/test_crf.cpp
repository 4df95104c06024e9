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
#include <limits>
#include <random>

#include "test_util.hpp"
#include "viewseg/crf.hpp"

namespace viewseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CrfParams literal_params(int L, double near = 1.0, double far = 1.0, double feat = 1.0) {
  CrfParams p = make_crf_params(L, {near, far, feat});
  p.normalize_kernels = false;
  return p;
}

Matrix random_symmetric_distances(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.1, 3.0);
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = u(rng);
  }
  return d;
}

std::vector<Signal> random_features(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Signal> f(n);
  for (Signal& s : f) {
    for (double& x : s) x = g(rng);
  }
  return f;
}

Matrix random_unary(std::mt19937_64& rng, std::size_t n, std::size_t L) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  Matrix m(n, L);
  for (double& x : m.data) x = u(rng);
  return m;
}

void randomize(std::mt19937_64& rng, CrfParams& p) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : p.mu.data) x = u(rng);
  p.w_near = u(rng);
  p.w_far = u(rng);
  p.w_feat = u(rng);
}

TEST(Kernels, PointExamples) {
  Matrix d(2, 2);
  d(0, 1) = d(1, 0) = 2.0;
  const std::vector<Signal> f{Signal{0, 0, 0, 0, 0, 1}, Signal{0, 0, 0, 0, 0, 1}};
  const KernelMatrices k = build_kernels(d, f, literal_params(2, 2.0, 4.0, 1.0));
  EXPECT_EQ(k.near(0, 0), 1.0);
  EXPECT_EQ(k.far(0, 0), 0.0);
  EXPECT_EQ(k.feat(0, 1), 1.0);
  EXPECT_NEAR(k.near(0, 1), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(k.far(0, 1), 1.0 - std::exp(-0.5), 1e-15);
  EXPECT_EQ(k.near_scale, 1.0);
}

TEST(Kernels, SymmetricBoundedAndMonotone) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 8;
    const Matrix d = random_symmetric_distances(rng, n);
    const KernelMatrices k = build_kernels(d, random_features(rng, n), literal_params(3, 0.7, 1.3, 0.9));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (const Matrix* m : {&k.near, &k.far, &k.feat}) {
          EXPECT_EQ((*m)(i, j), (*m)(j, i));
          EXPECT_GE((*m)(i, j), 0.0);
          EXPECT_LE((*m)(i, j), 1.0);
        }
        for (std::size_t jj = 0; jj < n; ++jj) {
          if (d(i, j) < d(i, jj)) {
            EXPECT_GE(k.near(i, j), k.near(i, jj));
            EXPECT_LE(k.far(i, j), k.far(i, jj));
          }
        }
      }
    }
  }
}

TEST(Kernels, DisconnectedAndCutoff) {
  Matrix d(3, 3);
  d(0, 1) = d(1, 0) = 0.5;
  d(0, 2) = d(2, 0) = d(1, 2) = d(2, 1) = kInf;
  const std::vector<Signal> f(3);
  const KernelMatrices k = build_kernels(d, f, literal_params(2));
  EXPECT_EQ(k.near(0, 2), 0.0);
  EXPECT_EQ(k.far(0, 2), 1.0);
  EXPECT_EQ(k.feat(0, 2), 1.0);

  CrfParams c = literal_params(2);
  c.cutoff = 0.4;
  const KernelMatrices kc = build_kernels(d, f, c);
  EXPECT_EQ(kc.near(0, 1), 0.0);
  EXPECT_EQ(kc.far(0, 1), 0.0);
  EXPECT_EQ(kc.feat(0, 1), 0.0);
  EXPECT_EQ(kc.near(0, 0), 1.0);
}

TEST(Kernels, NormalizationScaleIsVertexCountOverOffDiagonalMass) {
  std::mt19937_64 rng(2);
  const std::size_t n = 6;
  const Matrix d = random_symmetric_distances(rng, n);
  CrfParams p = literal_params(2);
  p.normalize_kernels = true;
  const KernelMatrices k = build_kernels(d, random_features(rng, n), p);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) total += i == j ? 0.0 : k.near(i, j);
  }
  EXPECT_NEAR(k.near_scale * total, static_cast<double>(n), 1e-12);
}

TEST(Unary, Examples) {
  ProbabilityField g(1, 10, 0.1);
  const Matrix u = unary_from_probabilities(g);
  EXPECT_NEAR(u(0, 3), std::log(10.0), 1e-15);
  ProbabilityField h(1, 2);
  h(0, 0) = 1.0;
  h(0, 1) = std::exp(-1.0);
  const Matrix v = unary_from_probabilities(h);
  EXPECT_EQ(v(0, 0), 0.0);
  EXPECT_NEAR(v(0, 1), 1.0, 1e-15);
}

TEST(Pairwise, Examples) {
  Matrix d(2, 2);
  d(0, 1) = d(1, 0) = 1.0;
  const std::vector<Signal> f{Signal{}, Signal{1, 0, 0, 0, 0, 0}};
  CrfParams p = literal_params(3);
  const KernelMatrices k = build_kernels(d, f, p);
  EXPECT_EQ(pairwise_potential(1, 2, 0, 1, p, k), 0.0);

  p.w_near = 1.0, p.w_far = 0.0, p.w_feat = 0.0;
  EXPECT_NEAR(pairwise_potential(2, 2, 0, 1, p, k), std::exp(-1.0), 1e-15);

  p.mu(0, 1) = 2.0;
  p.w_near = 0.5, p.w_far = 0.3, p.w_feat = 0.2;
  const double e1 = std::exp(-1.0);
  EXPECT_NEAR(pairwise_potential(1, 2, 0, 1, p, k), 2.0 * (0.5 * e1 - 0.3 * (1.0 - e1) + 0.2 * e1), 1e-15);
  EXPECT_THROW(pairwise_potential(1, 1, 1, 1, p, k), ValidationError);
  EXPECT_THROW(pairwise_potential(0, 1, 0, 1, p, k), ValidationError);
}

TEST(Energy, MatchesEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 3;
    const int L = 2 + static_cast<int>(rng() % 2);
    CrfParams p = literal_params(L, 0.8, 1.7, 1.1);
    p.normalize_kernels = trial % 2 == 0;
    randomize(rng, p);
    const Matrix d = random_symmetric_distances(rng, n);
    const KernelMatrices k = build_kernels(d, random_features(rng, n), p);
    const Matrix u = random_unary(rng, n, L);
    std::vector<Label> lab(n, 1);
    for (;;) {
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        e += u(i, lab[i] - 1);
        for (std::size_t j = i + 1; j < n; ++j) {
          const double kk = p.w_near * k.near_scale * std::exp(-d(i, j) / p.sigma_near) -
                            p.w_far * k.far_scale * (1.0 - std::exp(-d(i, j) / p.sigma_far)) +
                            p.w_feat * k.feat_scale * k.feat(i, j);
          e += p.mu(lab[i] - 1, lab[j] - 1) * kk;
        }
      }
      EXPECT_NEAR(crf_energy(lab, u, p, k), e, 1e-12);
      std::size_t pos = 0;
      while (pos < n && lab[pos] == L) lab[pos++] = 1;
      if (pos == n) break;
      ++lab[pos];
    }
  }
}

TEST(MeanField, TwoVerticesOneIterationByHand) {
  Matrix d(2, 2);
  d(0, 1) = d(1, 0) = 0.5;
  const std::vector<Signal> f{Signal{}, Signal{0, 0, 0, 0, 0, 2}};
  CrfParams p = literal_params(2, 1.0, 2.0, 1.0);
  p.iterations = 1;
  p.mu(0, 1) = 0.4;
  p.w_near = 0.7, p.w_far = 0.2, p.w_feat = -0.3;
  const KernelMatrices k = build_kernels(d, f, p);
  Matrix u(2, 2);
  u(0, 0) = 0.1, u(0, 1) = 1.2, u(1, 0) = 0.9, u(1, 1) = 0.3;

  const double kc = 0.7 * std::exp(-0.5) - 0.2 * (1.0 - std::exp(-0.25)) - 0.3 * std::exp(-2.0);
  auto soft = [](double a, double b) { return std::exp(-a) / (std::exp(-a) + std::exp(-b)); };
  const double q00 = soft(0.1, 1.2), q10 = soft(0.9, 0.3);
  const double q01 = 1 - q00, q11 = 1 - q10;
  // C(i, l) = sum_l' mu(l, l') kc Q(j, l').
  const double c00 = kc * (1.0 * q10 + 0.4 * q11), c01 = kc * (0.0 * q10 + 1.0 * q11);
  const double c10 = kc * (1.0 * q00 + 0.4 * q01), c11 = kc * (0.0 * q00 + 1.0 * q01);
  const ProbabilityField q = mean_field_infer(u, p, k);
  EXPECT_NEAR(q(0, 0), soft(0.1 + c00, 1.2 + c01), 1e-14);
  EXPECT_NEAR(q(1, 0), soft(0.9 + c10, 0.3 + c11), 1e-14);
}

TEST(MeanField, ZeroWeightsGiveSoftmaxOfNegUnary) {
  std::mt19937_64 rng(4);
  for (int T : {1, 3, 5, 10}) {
    const std::size_t n = 7;
    CrfParams p = literal_params(4);
    randomize(rng, p);
    p.w_near = p.w_far = p.w_feat = 0.0;
    p.iterations = T;
    const KernelMatrices k = build_kernels(random_symmetric_distances(rng, n), random_features(rng, n), p);
    const Matrix u = random_unary(rng, n, 4);
    const auto labels = map_labeling(mean_field_infer(u, p, k));
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t best = 0;
      for (std::size_t l = 1; l < 4; ++l) {
        if (u(v, l) < u(v, best)) best = l;
      }
      EXPECT_EQ(labels[v], static_cast<Label>(best + 1));
    }
  }
}

TEST(MeanField, RowsAreDistributions) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 20;
    const int L = 2 + static_cast<int>(rng() % 6);
    CrfParams p = literal_params(L, 0.5, 2.0, 1.0);
    p.normalize_kernels = trial % 2 == 0;
    randomize(rng, p);
    p.iterations = 1 + static_cast<int>(rng() % 6);
    const KernelMatrices k = build_kernels(random_symmetric_distances(rng, n), random_features(rng, n), p);
    const ProbabilityField q = mean_field_infer(random_unary(rng, n, L), p, k);
    EXPECT_LE(max_row_sum_error(q), 1e-9);
    for (double x : q.values.data) EXPECT_GE(x, 0.0);
  }
}

TEST(MeanField, RejectsBadInputs) {
  CrfParams p = literal_params(3);
  const KernelMatrices k = build_kernels(Matrix(2, 2), std::vector<Signal>(2), p);
  EXPECT_THROW(mean_field_infer(Matrix(2, 2), p, k), ValidationError);
  EXPECT_THROW(mean_field_infer(Matrix(3, 3), p, k), ValidationError);
  p.iterations = 0;
  EXPECT_THROW(mean_field_infer(Matrix(2, 3), p, k), ConfigError);
}

double loss_of(const Matrix& u, const CrfParams& p, const KernelMatrices& k, const std::vector<Label>& labels) {
  const ProbabilityField q = mean_field_infer(u, p, k);
  double s = 0.0;
  for (std::size_t v = 0; v < labels.size(); ++v) s -= std::log(q(v, labels[v] - 1));
  return s / static_cast<double>(labels.size());
}

void check_gradients(std::uint64_t seed, std::size_t n, bool normalize) {
  std::mt19937_64 rng(seed);
  const int L = 3;
  CrfParams p = literal_params(L, 0.8, 2.0, 1.2);
  p.normalize_kernels = normalize;
  p.iterations = 3;
  randomize(rng, p);
  const KernelMatrices k = build_kernels(random_symmetric_distances(rng, n), random_features(rng, n), p);
  Matrix u = random_unary(rng, n, L);
  std::vector<Label> labels(n);
  for (Label& l : labels) l = static_cast<Label>(1 + rng() % L);

  const CrfGradient g = crf_backward(u, p, k, labels);
  EXPECT_NEAR(g.loss, loss_of(u, p, k, labels), 1e-12);
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.mu.data.size(); ++i) {
    const double num = testing::central_difference(p.mu.data, i, h, [&] { return loss_of(u, p, k, labels); });
    EXPECT_TRUE(testing::gradient_close(g.grad.mu.data[i], num)) << "mu " << i << " " << g.grad.mu.data[i] << " " << num;
  }
  for (auto [field, grad] : {std::pair{&CrfParams::w_near, g.grad.w_near}, std::pair{&CrfParams::w_far, g.grad.w_far},
                             std::pair{&CrfParams::w_feat, g.grad.w_feat}}) {
    std::vector<double> x{p.*field};
    const double num = testing::central_difference(x, 0, h, [&] {
      CrfParams q = p;
      q.*field = x[0];
      return loss_of(u, q, k, labels);
    });
    EXPECT_TRUE(testing::gradient_close(grad, num)) << grad << " " << num;
  }
  for (std::size_t i = 0; i < u.data.size(); ++i) {
    const double num = testing::central_difference(u.data, i, h, [&] { return loss_of(u, p, k, labels); });
    EXPECT_TRUE(testing::gradient_close(g.unary.data[i], num)) << "unary " << i;
  }
}

TEST(CrfBackward, MatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    check_gradients(100 + s, 5, s % 2 == 0);
    check_gradients(200 + s, 20, s % 2 == 1);
  }
}

TEST(CrfBackward, IdentityMuZeroWeightsIsUnaryCrossEntropy) {
  std::mt19937_64 rng(6);
  CrfParams p = literal_params(3);
  p.w_near = p.w_far = p.w_feat = 0.0;
  const KernelMatrices k = build_kernels(random_symmetric_distances(rng, 4), random_features(rng, 4), p);
  const Matrix u = random_unary(rng, 4, 3);
  const std::vector<Label> labels{1, 2, 3, 1};
  double ce = 0.0;
  for (std::size_t v = 0; v < 4; ++v) {
    double z = 0.0;
    for (std::size_t l = 0; l < 3; ++l) z += std::exp(-u(v, l));
    ce += u(v, labels[v] - 1) + std::log(z);
  }
  EXPECT_NEAR(crf_backward(u, p, k, labels).loss, ce / 4.0, 1e-14);
}

TEST(TrainCrf, SmoothingToyRewardsNearbyAgreement) {
  // Two-label strip; unaries are right on most vertices and flipped on a few.
  const Mesh strip = testing::grid_mesh(3, 12, 0.1);
  const std::size_t n = strip.vertex_count();
  std::vector<Label> gt(n);
  for (std::size_t v = 0; v < n; ++v) gt[v] = (v % 12) < 6 ? 1 : 2;
  std::mt19937_64 rng(7);
  Matrix u(n, 2);
  for (std::size_t v = 0; v < n; ++v) {
    const bool flip = rng() % 5 == 0;
    const Label shown = flip ? 3 - gt[v] : gt[v];
    u(v, shown - 1) = -std::log(0.7);
    u(v, 2 - shown) = -std::log(0.3);
  }
  CrfParams p = default_crf_params(strip, 2);
  p.w_near = 0.1, p.w_far = 0.0, p.w_feat = 0.0;
  const KernelMatrices k = build_kernels(strip, p);
  const std::vector<CrfSample> samples{{&k, u, gt}};
  const double before = near_affinity(p, 1, 1) - near_affinity(p, 1, 2);
  const double loss0 = crf_backward(u, p, k, gt).loss;
  CrfTrainOptions opts;
  opts.adam.lr = 5e-2;
  const CrfParams trained = train_crf(samples, p, opts);
  const double after = near_affinity(trained, 1, 1) - near_affinity(trained, 1, 2);
  EXPECT_LT(crf_backward(u, trained, k, gt).loss, loss0);
  EXPECT_GT(after, before);
  EXPECT_GT(after, 0.0);
  // With mu(l, l) > 0 a same-label pair is rewarded only when w_near < 0.
  EXPECT_LT(trained.w_near, 0.0);
}

}  // namespace
}  // namespace viewseg
