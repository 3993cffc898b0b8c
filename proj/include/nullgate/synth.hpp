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
#include <vector>

#include "nullgate/common.hpp"
#include "nullgate/embedding_io.hpp"

namespace nullgate {

enum class Encoding { kLinear, kQuadraticSign, kMixed };

Encoding encoding_from_name(const std::string& name);
std::string encoding_name(Encoding encoding);

struct SynthAttribute {
  std::string name;
  int num_classes = 2;
  Encoding encoding = Encoding::kLinear;
  double strength = 1.0;
};

struct SynthConfig {
  Eigen::Index N = 2000;
  Eigen::Index d = 64;
  std::vector<SynthAttribute> attributes;
  Eigen::Index n_items = 200;
  // Share of each item vector's squared norm lying in the sensitive span.
  double task_correlation = 0.3;
  // Item vector norm; sets how peaked the target distribution is.
  double task_scale = 4.0;
  // Radius of the class offsets at strength 1.
  double offset_scale = 2.0;
  // Multiplier on the two designated coordinates of a quadratic structure.
  // Leaves class means at zero; makes the pair stand out for nonlinear probes.
  double quadratic_scale = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// What was planted for one attribute. Linear and mixed encodings carry one
// unit direction (m = 2) or an orthonormal pair spanning the class circle
// (m > 2); quadratic and mixed encodings carry the coordinate pair.
struct PlantedStructure {
  std::string name;
  Encoding encoding = Encoding::kLinear;
  Matrix directions;  // rows are unit vectors; empty for quadratic-sign
  int coord_i = -1;
  int coord_j = -1;
};

std::vector<PlantedStructure> ground_truth_directions(const SynthConfig& config);

struct SynthBundle {
  EmbeddingSet data;  // task labels are target item indices
  Matrix items;       // n_items x d
  std::vector<PlantedStructure> truth;
};

// Base cloud N(0, I). Linear: random class, offset strength * offset_scale
// on the class circle. Quadratic-sign: class is the sector of the doubled
// angle of (x_i, x_j) after both are scaled by quadratic_scale, replaced by a random class with probability
// 1 - strength. Mixed: quadratic class plus a half-strength linear offset.
// Targets are drawn from softmax(items * h).
SynthBundle generate_bundle(const SynthConfig& config);
EmbeddingSet generate(const SynthConfig& config);

// JSON sidecar with the config echo, planted structures and item vectors.
std::string ground_truth_to_json(const SynthConfig& config,
                                 const SynthBundle& bundle);
void save_ground_truth(const SynthConfig& config, const SynthBundle& bundle,
                       const std::string& path);
// Reads item vectors back from a sidecar.
Matrix load_items(const std::string& path);

}  // namespace nullgate
