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
#include <span>
#include <string>
#include <vector>

#include "nullgate/common.hpp"

namespace nullgate {

// Trainable gates and experts plus the frozen pieces they act on. The
// projectors and the output map O are never touched by training.
struct AdapterParams {
  Matrix G1;               // K x d level-1 gate
  Matrix g;                // K x d, row k is the level-2 key g_k
  std::vector<Matrix> U;   // K experts, d x r
  std::vector<Matrix> V;   // K experts, r x d
  Matrix O;                // d x d frozen output map
  std::vector<Matrix> projectors;  // K frozen d x d projectors

  Eigen::Index dim() const { return O.rows(); }
  int num_attributes() const { return static_cast<int>(projectors.size()); }
  Eigen::Index rank() const { return U.empty() ? 0 : U.front().cols(); }
  void validate() const;
  // Checksums of the frozen tensors: projectors first, then O.
  std::vector<std::uint64_t> frozen_checksums() const;
};

// G1 = 0, g = 0, U = 0, V ~ N(0, v_scale^2): the initial forward pass is
// O h* with uniform level-1 weights.
AdapterParams init_adapter(std::vector<Matrix> projectors, Matrix O,
                           Eigen::Index rank, std::uint64_t seed,
                           double v_scale = 0.01);

struct AdapterTrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  // Longer runs memorize the training targets and lose held-out Hit@k.
  int epochs = 10;
  int batch_size = 32;
  double lambda_entropy = 1e-3;
  double lambda_l1 = 1e-3;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scores are <y, item_i>; the loss is softmax cross-entropy over items.
struct ToyTaskHead {
  Matrix items;  // I x d

  void validate(Eigen::Index d) const;
};

// One sequence of token states and the index of its target item.
struct TaskExample {
  Matrix tokens;  // T x d
  int target = 0;
};

Vector pool_context(const Matrix& tokens);
Vector level1_gate(const Vector& c, const Matrix& G1);
// h - sum_k alpha_k (h - P_k h). Weights summing to less than one leave the
// missing mass on h.
Vector soft_project(const Vector& h, const Vector& alpha,
                    std::span<const Matrix> projectors);
Matrix soft_project_jacobian(const Vector& alpha,
                             std::span<const Matrix> projectors);
double level2_gate(const Vector& c_tilde, const Vector& g_k);
Vector layer_normalize(const Vector& c, double eps = 1e-5);
// O h* + sum_k beta_k U_k (V_k h*).
Vector adapter_forward(const Vector& h_star, const AdapterParams& params,
                       const Vector& beta);

// Every intermediate of one sequence's forward pass.
struct AdapterPass {
  Vector c;
  Vector alpha;
  Vector h_star;
  Vector c_tilde;
  Vector beta;
  Vector y;
};

AdapterPass adapter_apply(const Matrix& tokens, const AdapterParams& params,
                          double layer_norm_eps = 1e-5);
// Adapter outputs y for a batch of sequences, one row each.
Matrix adapter_outputs(std::span<const TaskExample> examples,
                       const AdapterParams& params,
                       double layer_norm_eps = 1e-5);

struct AdapterGradients {
  Matrix G1;
  Matrix g;
  std::vector<Matrix> U;
  std::vector<Matrix> V;

  static AdapterGradients zeros_like(const AdapterParams& params);
};

struct AdapterLoss {
  double total = 0.0;
  double task = 0.0;
  double entropy = 0.0;  // lambda_H * mean sum alpha log alpha
  double l1 = 0.0;       // lambda_1 * mean sum beta
  Vector mean_alpha;
};

// Batch-mean loss. Fills grads (if non-null) with gradients for the trainable
// tensors only. Throws NumericalError on a non-finite loss.
AdapterLoss adapter_loss(std::span<const TaskExample> batch,
                         const AdapterParams& params, const ToyTaskHead& head,
                         const AdapterTrainConfig& config,
                         AdapterGradients* grads = nullptr);

struct AdapterEpochLog {
  int epoch = 0;
  AdapterLoss loss;
};

struct AdapterTrainResult {
  AdapterParams params;
  double initial_loss = 0.0;
  std::vector<AdapterEpochLog> trace;
};

// Momentum SGD over shuffled mini-batches. Throws DivergenceError when the
// epoch loss exceeds ten times the initial loss three epochs running or a
// batch loss turns non-finite, and IntegrityError if a frozen tensor changed.
AdapterTrainResult train_adapter(std::span<const TaskExample> train,
                                 AdapterParams init, const ToyTaskHead& head,
                                 const AdapterTrainConfig& config);

// epoch,loss,task_loss,entropy_term,l1_term,mean_alpha_0,...
std::string format_trace(const std::vector<AdapterEpochLog>& trace);

// Hit@k with one positive and up to 99 sampled negatives per row. A negative
// scoring at least as high as the positive counts against it.
struct HitRates {
  double hit1 = 0.0;
  double hit3 = 0.0;
  double hit10 = 0.0;
};

HitRates hit_rates(const Matrix& outputs, std::span<const int> targets,
                   const ToyTaskHead& head, std::uint64_t seed,
                   int negatives = 99);

// Adapter file: trainable tensors and O inline, projectors by reference.
struct ProjectorRef {
  std::string path;
  std::uint64_t checksum = 0;
};

std::string serialize_adapter(const AdapterParams& params,
                              const std::vector<std::string>& projector_paths);
// Projectors are left empty; the references are returned separately.
AdapterParams parse_adapter(const std::string& bytes,
                            std::vector<ProjectorRef>* refs,
                            const std::string& source = "<memory>");
void save_adapter(const AdapterParams& params,
                  const std::vector<std::string>& projector_paths,
                  const std::string& path);
// Loads the referenced projector files (relative paths resolve against the
// adapter's directory) and throws IntegrityError on a checksum mismatch.
AdapterParams load_adapter(const std::string& path);

}  // namespace nullgate
