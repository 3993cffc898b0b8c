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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nullgate/common.hpp"

namespace nullgate {

struct AttributeLabels {
  std::string name;
  int num_classes = 0;
  Labels labels;
};

// Sequence-level representations with per-row sensitive labels and an
// optional target-item label.
struct EmbeddingSet {
  MatrixF X;
  std::vector<AttributeLabels> attributes;
  std::optional<Labels> task_labels;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }

  bool has_attribute(std::string_view name) const;
  // Throws InputError when the attribute is absent.
  const AttributeLabels& attribute(std::string_view name) const;
  Matrix as_double() const { return X.cast<double>(); }

  // Throws InputError describing the first violated invariant.
  void validate() const;
};

enum class EmbeddingFormat { kBinary, kCsv };

EmbeddingFormat format_from_name(std::string_view name);
EmbeddingFormat format_from_path(std::string_view path);

EmbeddingSet load_embedding_set(const std::string& path, EmbeddingFormat format);
void save_embedding_set(const EmbeddingSet& set, const std::string& path,
                        EmbeddingFormat format);

std::string serialize_embedding_set(const EmbeddingSet& set);
EmbeddingSet parse_embedding_set(const std::string& bytes,
                                 const std::string& source = "<memory>");
std::string embedding_set_to_csv(const EmbeddingSet& set);
EmbeddingSet embedding_set_from_csv(const std::string& text,
                                    const std::string& source = "<memory>");

EmbeddingSet subset(const EmbeddingSet& set,
                    std::span<const std::size_t> rows);

// A d x d debiasing projector together with how it was obtained.
struct ProjectorRecord {
  std::string attribute;
  Matrix P;
  std::uint32_t probe_count = 0;
  double achieved_gap = 0.0;
  std::string rff_spec_id;
  std::uint32_t refinements = 0;
  bool converged = true;

  // Symmetry is enforced; idempotence is reported, not enforced, because a
  // backbone block of a lifted projector is only approximately idempotent.
  void validate() const;
  double idempotence_error() const;
};

inline constexpr double kSymmetryTolerance = 1e-8;
inline constexpr double kIdempotenceTolerance = 1e-6;

std::string serialize_projector(const ProjectorRecord& rec);
ProjectorRecord parse_projector(const std::string& bytes,
                                const std::string& source = "<memory>");
void save_projector(const ProjectorRecord& rec, const std::string& path);
ProjectorRecord load_projector(const std::string& path);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Uniform random row partition. Train and val sizes are floored; the
// remainder goes to test. Throws InputError if any part would be empty.
SplitIndices split_indices(std::size_t n, std::array<double, 3> fractions,
                           std::uint64_t seed);

struct DatasetSplit {
  EmbeddingSet train;
  EmbeddingSet val;
  EmbeddingSet test;
  SplitIndices indices;
};

DatasetSplit split_dataset(const EmbeddingSet& set,
                           std::array<double, 3> fractions, std::uint64_t seed);

// Two-way split used for held-out audits: (1 - holdout) / holdout.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t n, double holdout, std::uint64_t seed);

}  // namespace nullgate
