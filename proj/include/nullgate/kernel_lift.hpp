// Copyright 2026 The nullgate Authors.
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
#include <string>

#include "nullgate/common.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {

// Frozen random Fourier feature parameters. Omega and b are a pure function
// of (seed, d, D, sigma); the file format stores only those scalars.
struct RffSpec {
  Matrix omega;  // D x d, entries ~ N(0, sigma^-2)
  Vector phase;  // D, uniform on [0, 2 pi)
  double sigma = 1.0;
  double eta = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index input_dim() const { return omega.cols(); }
  Eigen::Index feature_dim() const { return omega.rows(); }
  Eigen::Index lifted_dim() const { return omega.cols() + omega.rows(); }
  // Short stable identifier used to tie projectors to the lift they came from.
  std::string id() const;
};

RffSpec sample_rff(Eigen::Index d, Eigen::Index D, double sigma, double eta,
                   std::uint64_t seed);
// A lift with no Fourier features: lift(h) = h. Used for the D = 0 ablation.
RffSpec identity_lift(Eigen::Index d, double eta, std::uint64_t seed = 0);

// h + eps, eps ~ N(0, eta^2 I). Draws from the caller's generator.
Vector perturb(const Vector& h, double eta, CounterRng& rng);
// Row-wise perturbation of a whole matrix.
Matrix perturb_rows(const Matrix& H, double eta, CounterRng& rng);

// sqrt(2/D) cos(Omega h + b).
Vector fourier_features(const Vector& h_tilde, const RffSpec& spec);
// [h_tilde; fourier_features(h_tilde)].
Vector lift(const Vector& h_tilde, const RffSpec& spec);
// Row-wise lift of an N x d matrix to N x (d + D).
Matrix lift_rows(const Matrix& H_tilde, const RffSpec& spec);

// <phi(x), phi(y)>, an unbiased estimate of exp(-|x-y|^2 / (2 sigma^2)).
double kernel_estimate(const Vector& x, const Vector& y, const RffSpec& spec);
double gaussian_kernel(const Vector& x, const Vector& y, double sigma);

// Median pairwise Euclidean distance over at most max_rows rows drawn with
// the given seed.
double median_bandwidth(const Matrix& X, std::uint64_t seed = 0,
                        Eigen::Index max_rows = 1000);

std::string serialize_rff_spec(const RffSpec& spec);
RffSpec parse_rff_spec(const std::string& bytes,
                       const std::string& source = "<memory>");
void save_rff_spec(const RffSpec& spec, const std::string& path);
RffSpec load_rff_spec(const std::string& path);

}  // namespace nullgate
