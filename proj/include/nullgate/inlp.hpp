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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nullgate/common.hpp"
#include "nullgate/embedding_io.hpp"
#include "nullgate/kernel_lift.hpp"
#include "nullgate/probes.hpp"

namespace nullgate {

struct InlpConfig {
  // Leakage threshold for both the inner linear check and the outer MLP audit.
  double tau = 0.05;
  int max_iterations = 30;
  int max_refinements = 3;
  double rank_tolerance = 1e-8;
  // Share of rows held out for the inner linear-probe check.
  double holdout = 0.2;
  LinearProbeConfig probe;

  void validate() const;
};

// Accumulated probe directions. Rows are kept orthonormal: each incoming row
// is orthogonalized against the stack and dropped if its residual norm falls
// below the rank tolerance.
class ProbeStack {
 public:
  explicit ProbeStack(Eigen::Index dim = 0) : rows_(0, dim) {}

  Eigen::Index dim() const { return rows_.cols(); }
  Eigen::Index rows() const { return rows_.rows(); }
  const Matrix& directions() const { return rows_; }
  int iterations() const { return iterations_; }
  void count_iteration() { ++iterations_; }

  // Returns the number of rows actually appended.
  int append(const Matrix& candidates, double rank_tolerance);

  // X (I - W^T W) without forming the dense projector.
  Matrix project_rows(const Matrix& X) const;
  // I - W^T W.
  Matrix dense_projector() const;
  // Upper-left d x d block of dense_projector().
  Matrix backbone_block(Eigen::Index d) const;

 private:
  Matrix rows_;
  int iterations_ = 0;
};

// I - W^T (W W^T)^{-1} W after dropping rows that are linearly dependent on
// earlier rows (relative residual below rank_tolerance). Throws NumericalError
// with conditioning diagnostics if the remaining Gram matrix is singular.
Matrix nullspace_projector(const Matrix& W, double rank_tolerance = 1e-8);

// Upper-left d x d block.
Matrix extract_backbone_block(const Matrix& P_hat, Eigen::Index d);

// Softmax-gauge-free class directions: w_i - mean_j w_j.
Matrix gauge_free_rows(const Matrix& W);

struct InlpIterationLog {
  int iteration = 0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  double heldout_gap = 0.0;
  int rows_added = 0;
};

struct InlpResult {
  ProbeStack stack;
  bool reached_threshold = false;
  double final_gap = 0.0;
  std::vector<InlpIterationLog> log;
};

// Fits a linear probe on the currently projected data, appends its class
// directions, and repeats until the held-out linear gap is <= tau or
// max_iterations removals have been made. Starts from `initial`.
InlpResult run_inlp(const Matrix& X_lifted, std::span<const int> labels,
                    int num_classes, const InlpConfig& config,
                    std::uint64_t seed, ProbeStack initial = ProbeStack());

// Same loop on raw embeddings H: every iteration draws a fresh perturbation
// of H (keyed by seed and iteration) and lifts it with `spec`.
InlpResult run_inlp_perturbed(const Matrix& H, std::span<const int> labels,
                              int num_classes, const RffSpec& spec,
                              const InlpConfig& config, std::uint64_t seed,
                              ProbeStack initial = ProbeStack());

struct RefinementLog {
  int round = 0;
  InlpResult inner;
  double mlp_gap = 0.0;
  double idempotence_error = 0.0;
};

struct AttributeProjectorFit {
  ProjectorRecord record;
  ProbeStack stack;
  std::vector<RefinementLog> refinements;
};

// Outer refinement loop: perturb, lift, run INLP (continuing the stack),
// take the backbone block, audit it with an MLP on held-out rows, and repeat
// with a fresh perturbation while the gap exceeds tau. With an identity lift
// (no Fourier features) the probes see the perturbed embeddings directly.
AttributeProjectorFit fit_attribute_projector(
    const EmbeddingSet& train, const std::string& attribute,
    const RffSpec& lift_spec, const InlpConfig& config,
    const MlpConfig& audit, std::uint64_t seed);

std::string format_fit_log(const AttributeProjectorFit& fit);

// Orthonormal basis (as rows) of the directions a projector removes:
// eigenvectors with eigenvalue below 1/2.
Matrix removed_directions(const Matrix& P);

struct CompositeProjector {
  Matrix P;
  Eigen::Index intersection_dim = 0;
  // Set when the intersection is {0} and every direction is removed.
  bool total_loss = false;
};

// Orthogonal projector onto the intersection of the records' ranges.
CompositeProjector compose_projectors(std::span<const ProjectorRecord> records,
                                      double rank_tolerance = 1e-8);

}  // namespace nullgate
