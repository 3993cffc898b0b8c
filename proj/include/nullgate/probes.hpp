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

struct LinearProbeConfig {
  int max_iters = 300;
  double l2 = 1e-3;
  // Stop once the relative loss decrease of a step falls below tol.
  double tol = 1e-7;
};

// Multinomial logistic regression; one weight row per class.
struct LinearProbe {
  Matrix W;     // m x p
  Vector bias;  // m
  std::string attribute;
  double train_accuracy = 0.0;
  // Penalized loss before the first step and after each accepted step.
  std::vector<double> loss_trace;

  int num_classes() const { return static_cast<int>(W.rows()); }
  Matrix predict_proba(const Matrix& X) const;
  double accuracy(const Matrix& X, std::span<const int> labels) const;
};

// Full-batch gradient descent with the fixed step 1/L, L an upper bound on
// the curvature of the penalized loss, so the loss never increases.
LinearProbe fit_linear_probe(const Matrix& X, std::span<const int> labels,
                             int num_classes, const LinearProbeConfig& config,
                             std::string attribute = {});

struct MlpConfig {
  int hidden = 128;
  int epochs = 50;
  double lr = 1e-3;
  double momentum = 0.9;
  int batch_size = 8;
  std::uint64_t seed = 0;
};

// Two-layer ReLU network with a softmax output.
struct MlpProbe {
  Matrix W1;  // hidden x d
  Vector b1;
  Matrix W2;  // m x hidden
  Vector b2;
  std::string attribute;

  int hidden() const { return static_cast<int>(W1.rows()); }
  int num_classes() const { return static_cast<int>(W2.rows()); }
  Matrix predict_proba(const Matrix& X) const;
  double accuracy(const Matrix& X, std::span<const int> labels) const;
};

MlpProbe fit_mlp_probe(const Matrix& X, std::span<const int> labels,
                       int num_classes, const MlpConfig& config,
                       std::string attribute = {});

// Mann-Whitney statistic P(pos > neg) + P(pos == neg) / 2, exact.
double auc_one_vs_rest(std::span<const double> scores,
                       std::span<const int> labels, int positive_class);

struct LeakageReport {
  std::string attribute;
  int num_classes = 0;
  // NaN for classes without held-out members (listed in excluded_classes).
  std::vector<double> auc_per_class;
  std::vector<int> excluded_classes;
  double gap = 0.0;
};

// Mean |AUC_i - 0.5| over the finite entries.
double leakage_gap_from_aucs(std::span<const double> aucs);

// One-vs-rest AUC per class from an N x m score matrix.
LeakageReport leakage_report(const Matrix& class_scores,
                             std::span<const int> labels, int num_classes,
                             std::string attribute = {});

LeakageReport leakage_gap(const MlpProbe& probe, const Matrix& X,
                          std::span<const int> labels);

// Fits an MLP probe on a (1 - holdout) share of Z and reports the gap on the
// remaining rows.
LeakageReport audit_leakage(const Matrix& Z, std::span<const int> labels,
                            int num_classes, const std::string& attribute,
                            const MlpConfig& config, double holdout = 0.2,
                            std::uint64_t split_seed = 0);

std::string leakage_reports_to_json(std::span<const LeakageReport> reports);
std::vector<LeakageReport> leakage_reports_from_json(const std::string& text);

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> rows);
Labels gather(std::span<const int> labels, std::span<const std::size_t> rows);

}  // namespace nullgate
