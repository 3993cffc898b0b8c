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

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "nullgate/embedding_io.hpp"
#include "nullgate/probes.hpp"
#include "nullgate/synth.hpp"

namespace nullgate {
namespace {

SynthConfig one_attribute(Encoding enc, double strength, std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.attributes = {{"a", 2, enc, strength}};
  cfg.seed = seed;
  return cfg;
}

// Held-out class-1 AUC of a linear probe fitted on the first 80% of rows.
double linear_auc(const EmbeddingSet& data) {
  const auto [fit, hold] = holdout_split(data.size(), 0.2, 3);
  const Matrix X = data.as_double();
  const Labels& y = data.attribute("a").labels;
  const LinearProbe p = fit_linear_probe(gather_rows(X, fit), gather(y, fit), 2, {});
  const Matrix proba = p.predict_proba(gather_rows(X, hold));
  const Labels yh = gather(y, hold);
  std::vector<double> s(proba.rows());
  for (Eigen::Index i = 0; i < proba.rows(); ++i) s[i] = proba(i, 1);
  return auc_one_vs_rest(s, yh, 1);
}

TEST(SynthTest, BaseCloudMomentsMatchStandardGaussian) {
  SynthConfig cfg;
  cfg.seed = 2;
  const EmbeddingSet data = generate(cfg);
  const Matrix X = data.as_double();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  EXPECT_LE(mean.norm() / std::sqrt(64.0), 0.05);
  const Matrix centered = X.rowwise() - mean;
  const Vector var = (centered.transpose() * centered).diagonal() / (X.rows() - 1);
  EXPECT_GE(var.minCoeff(), 0.9);
  EXPECT_LE(var.maxCoeff(), 1.1);
}

TEST(SynthTest, DeterministicInSeed) {
  const SynthConfig cfg = one_attribute(Encoding::kMixed, 0.7, 5);
  EXPECT_EQ(serialize_embedding_set(generate(cfg)), serialize_embedding_set(generate(cfg)));
  EXPECT_NE(serialize_embedding_set(generate(cfg)),
            serialize_embedding_set(generate(one_attribute(Encoding::kMixed, 0.7, 6))));
}

TEST(SynthTest, ZeroStrengthIsChance) {
  const double auc = linear_auc(generate(one_attribute(Encoding::kLinear, 0.0)));
  EXPECT_GE(auc, 0.45);
  EXPECT_LE(auc, 0.55);
}

TEST(SynthTest, LinearStrengthOneIsLinearlyVisible) {
  EXPECT_GE(linear_auc(generate(one_attribute(Encoding::kLinear, 1.0))), 0.95);
}

TEST(SynthTest, QuadraticSignIsLinearlyHiddenButNonlinearlyVisible) {
  const EmbeddingSet data = generate(one_attribute(Encoding::kQuadraticSign, 1.0));
  EXPECT_LE(linear_auc(data), 0.6);
  const LeakageReport rep =
      audit_leakage(data.as_double(), data.attribute("a").labels, 2, "a", MlpConfig{});
  // Two classes: gap = |AUC - 0.5|, so AUC >= 0.85 iff gap >= 0.35.
  EXPECT_GE(rep.auc_per_class[1], 0.85);
}

TEST(SynthTest, GroundTruthEchoesPlantedStructures) {
  SynthConfig cfg;
  cfg.attributes = {{"lin", 2, Encoding::kLinear, 1.0},
                    {"lin3", 3, Encoding::kLinear, 1.0},
                    {"quad", 2, Encoding::kQuadraticSign, 1.0}};
  cfg.seed = 8;
  const auto truth = ground_truth_directions(cfg);
  ASSERT_EQ(truth.size(), 3u);
  EXPECT_EQ(truth[0].directions.rows(), 1);
  EXPECT_EQ(truth[1].directions.rows(), 2);
  EXPECT_EQ(truth[2].directions.rows(), 0);
  EXPECT_GE(truth[2].coord_i, 0);
  EXPECT_NE(truth[2].coord_i, truth[2].coord_j);
  EXPECT_NEAR(truth[0].directions.row(0).norm(), 1.0, 1e-12);
  for (int r = 0; r < 2; ++r) {
    EXPECT_LE(std::abs(truth[0].directions.row(0).dot(truth[1].directions.row(r))), 0.3);
  }
  EXPECT_NEAR(truth[1].directions.row(0).dot(truth[1].directions.row(1)), 0.0, 1e-12);
  const SynthBundle bundle = generate_bundle(cfg);
  EXPECT_EQ(bundle.truth[0].directions, truth[0].directions);
}

TEST(SynthTest, FittedProbeAlignsWithPlantedDirection) {
  const SynthConfig cfg = one_attribute(Encoding::kLinear, 1.0, 9);
  const EmbeddingSet data = generate(cfg);
  const LinearProbe p = fit_linear_probe(data.as_double(), data.attribute("a").labels, 2, {});
  const Vector w = (p.W.row(1) - p.W.row(0)).transpose().normalized();
  const Vector u = ground_truth_directions(cfg)[0].directions.row(0).transpose();
  EXPECT_GE(std::abs(w.dot(u)), 0.9);
}

TEST(SynthTest, ItemsSplitTaskSignalAsConfigured) {
  SynthConfig cfg = one_attribute(Encoding::kLinear, 1.0, 10);
  cfg.attributes.push_back({"b", 2, Encoding::kLinear, 1.0});
  const SynthBundle b = generate_bundle(cfg);
  Matrix S(cfg.d, 2);
  S.col(0) = b.truth[0].directions.row(0).transpose();
  S.col(1) = b.truth[1].directions.row(0).transpose();
  const Eigen::HouseholderQR<Matrix> qr(S);
  const Matrix Q = qr.householderQ() * Matrix::Identity(cfg.d, 2);
  for (Eigen::Index i = 0; i < b.items.rows(); ++i) {
    const Vector v = b.items.row(i).transpose();
    EXPECT_NEAR((Q.transpose() * v).squaredNorm() / v.squaredNorm(), cfg.task_correlation, 1e-10);
  }
  ASSERT_TRUE(b.data.task_labels.has_value());
  for (int t : *b.data.task_labels) ASSERT_LT(t, cfg.n_items);
}

TEST(SynthTest, SidecarRoundTripsItems) {
  const SynthConfig cfg = one_attribute(Encoding::kLinear, 1.0, 11);
  const SynthBundle b = generate_bundle(cfg);
  const auto path = std::filesystem::temp_directory_path() / "nullgate_synth" / "truth.json";
  save_ground_truth(cfg, b, path.string());
  EXPECT_EQ(load_items(path.string()), b.items);
  std::filesystem::remove_all(path.parent_path());
}

TEST(SynthTest, InvalidConfigRejected) {
  SynthConfig cfg = one_attribute(Encoding::kLinear, 1.5);
  EXPECT_THROW(generate(cfg), InputError);
  cfg = one_attribute(Encoding::kLinear, 1.0);
  cfg.attributes[0].num_classes = 1;
  EXPECT_THROW(generate(cfg), InputError);
  cfg = one_attribute(Encoding::kLinear, 1.0);
  cfg.N = 1;
  EXPECT_THROW(generate(cfg), InputError);
  EXPECT_THROW(encoding_from_name("cubic"), InputError);
}

}  // namespace
}  // namespace nullgate
