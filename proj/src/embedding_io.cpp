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

#include "nullgate/embedding_io.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {
namespace {

constexpr std::string_view kEmbeddingMagic = "NDBS";
constexpr std::string_view kProjectorMagic = "NDPJ";
constexpr std::uint32_t kVersion = 1;

void check_finite_rows(const MatrixF& X, const std::string& source) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!X.row(i).allFinite()) {
      throw InputError(source + ": non-finite value in row " +
                       std::to_string(i));
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
      cell.pop_back();
    }
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

bool EmbeddingSet::has_attribute(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return true;
  }
  return false;
}

const AttributeLabels& EmbeddingSet::attribute(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.name == name) return a;
  }
  throw InputError("unknown attribute \"" + std::string(name) + "\"");
}

void EmbeddingSet::validate() const {
  if (X.rows() < 1 || X.cols() < 1) {
    throw InputError("embedding set needs N >= 1 and d >= 1");
  }
  check_finite_rows(X, "embedding set");
  const auto n = static_cast<std::size_t>(X.rows());
  for (const auto& a : attributes) {
    if (a.num_classes < 2) {
      throw InputError("attribute \"" + a.name + "\" declares fewer than 2 classes");
    }
    if (a.labels.size() != n) {
      throw InputError("attribute \"" + a.name + "\" has " +
                       std::to_string(a.labels.size()) + " labels for " +
                       std::to_string(n) + " rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (a.labels[i] < 0 || a.labels[i] >= a.num_classes) {
        throw InputError("attribute \"" + a.name + "\" row " +
                         std::to_string(i) + ": label " +
                         std::to_string(a.labels[i]) + " outside [0, " +
                         std::to_string(a.num_classes) + ")");
      }
    }
  }
  if (task_labels) {
    if (task_labels->size() != n) {
      throw InputError("task label count does not match row count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if ((*task_labels)[i] < 0) {
        throw InputError("negative task label in row " + std::to_string(i));
      }
    }
  }
}

EmbeddingFormat format_from_name(std::string_view name) {
  if (name == "binary" || name == "bin") return EmbeddingFormat::kBinary;
  if (name == "csv") return EmbeddingFormat::kCsv;
  throw InputError("unknown embedding format \"" + std::string(name) + "\"");
}

EmbeddingFormat format_from_path(std::string_view path) {
  return path.ends_with(".csv") ? EmbeddingFormat::kCsv
                                : EmbeddingFormat::kBinary;
}

std::string serialize_embedding_set(const EmbeddingSet& set) {
  set.validate();
  detail::ByteWriter w;
  w.magic(kEmbeddingMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.dim()));
  w.u32(static_cast<std::uint32_t>(set.attributes.size()));
  for (const auto& a : set.attributes) {
    w.str(a.name);
    w.u32(static_cast<std::uint32_t>(a.num_classes));
    for (int l : a.labels) w.u32(static_cast<std::uint32_t>(l));
  }
  w.u32(set.task_labels ? 1u : 0u);
  if (set.task_labels) {
    for (int l : *set.task_labels) w.u32(static_cast<std::uint32_t>(l));
  }
  for (Eigen::Index i = 0; i < set.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < set.X.cols(); ++j) w.f32(set.X(i, j));
  }
  return w.bytes();
}

EmbeddingSet parse_embedding_set(const std::string& bytes,
                                 const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kEmbeddingMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint32_t n_attr = r.u32();
  if (n == 0 || d == 0) r.fail("header declares empty matrix");

  EmbeddingSet set;
  for (std::uint32_t k = 0; k < n_attr; ++k) {
    AttributeLabels a;
    a.name = r.str();
    a.num_classes = static_cast<int>(r.u32());
    if (r.remaining() < std::size_t{4} * n) r.fail("truncated label block");
    a.labels.resize(n);
    for (auto& l : a.labels) l = static_cast<int>(r.u32());
    set.attributes.push_back(std::move(a));
  }
  const std::uint32_t has_task = r.u32();
  if (has_task > 1) r.fail("bad task-label flag");
  if (has_task == 1) {
    if (r.remaining() < std::size_t{4} * n) r.fail("truncated task block");
    Labels t(n);
    for (auto& l : t) l = static_cast<int>(r.u32());
    set.task_labels = std::move(t);
  }
  const std::size_t payload = std::size_t{n} * d * sizeof(float);
  if (r.remaining() != payload) {
    r.fail("payload holds " + std::to_string(r.remaining()) +
           " bytes but header N=" + std::to_string(n) +
           ", d=" + std::to_string(d) + " needs " + std::to_string(payload));
  }
  set.X.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) set.X(i, j) = r.f32();
  }
  check_finite_rows(set.X, source);
  set.validate();
  return set;
}

std::string embedding_set_to_csv(const EmbeddingSet& set) {
  set.validate();
  std::ostringstream out;
  out.precision(std::numeric_limits<float>::max_digits10);
  for (Eigen::Index j = 0; j < set.dim(); ++j) {
    out << (j ? "," : "") << "h_" << j;
  }
  for (const auto& a : set.attributes) out << ",attr:" << a.name;
  if (set.task_labels) out << ",task";
  out << '\n';
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    for (Eigen::Index j = 0; j < set.dim(); ++j) {
      out << (j ? "," : "") << set.X(i, j);
    }
    for (const auto& a : set.attributes) out << ',' << a.labels[i];
    if (set.task_labels) out << ',' << (*set.task_labels)[i];
    out << '\n';
  }
  return out.str();
}

EmbeddingSet embedding_set_from_csv(const std::string& text,
                                    const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError(source + ": empty CSV");
  const auto header = split_csv_line(line);

  std::size_t d = 0;
  std::vector<std::string> attr_names;
  bool has_task = false;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "h_" + std::to_string(d) && attr_names.empty() && !has_task) {
      ++d;
    } else if (h.starts_with("attr:") && h.size() > 5 && !has_task) {
      attr_names.push_back(h.substr(5));
    } else if (h == "task" && !has_task) {
      has_task = true;
    } else {
      throw InputError(source + ": unknown or misplaced column \"" + h + "\"");
    }
  }
  if (d == 0) throw InputError(source + ": no h_* columns");
  const std::size_t width = header.size();

  std::vector<std::vector<float>> rows;
  std::vector<Labels> attr_labels(attr_names.size());
  Labels task;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != width) {
      throw InputError(source + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(width));
    }
    std::vector<float> values(d);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& cell = cells[j];
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() ||
          !std::isfinite(v)) {
        throw InputError(source + ": row " + std::to_string(row) +
                         ": non-finite or malformed value \"" + cell + "\"");
      }
      values[j] = static_cast<float>(v);
      if (!std::isfinite(values[j])) {
        throw InputError(source + ": row " + std::to_string(row) +
                         ": value overflows float32");
      }
    }
    auto parse_label = [&](const std::string& cell) {
      int v = 0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() || v < 0) {
        throw InputError(source + ": row " + std::to_string(row) +
                         ": bad label \"" + cell + "\"");
      }
      return v;
    };
    for (std::size_t k = 0; k < attr_names.size(); ++k) {
      attr_labels[k].push_back(parse_label(cells[d + k]));
    }
    if (has_task) task.push_back(parse_label(cells.back()));
    rows.push_back(std::move(values));
    ++row;
  }
  if (rows.empty()) throw InputError(source + ": CSV has no data rows");

  EmbeddingSet set;
  set.X.resize(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) set.X(i, j) = rows[i][j];
  }
  for (std::size_t k = 0; k < attr_names.size(); ++k) {
    int max_label = 0;
    for (int l : attr_labels[k]) max_label = std::max(max_label, l);
    set.attributes.push_back(
        {attr_names[k], std::max(2, max_label + 1), std::move(attr_labels[k])});
  }
  if (has_task) set.task_labels = std::move(task);
  set.validate();
  return set;
}

EmbeddingSet load_embedding_set(const std::string& path,
                                EmbeddingFormat format) {
  const std::string data = detail::read_file(path);
  return format == EmbeddingFormat::kBinary ? parse_embedding_set(data, path)
                                            : embedding_set_from_csv(data, path);
}

void save_embedding_set(const EmbeddingSet& set, const std::string& path,
                        EmbeddingFormat format) {
  detail::write_file(path, format == EmbeddingFormat::kBinary
                               ? serialize_embedding_set(set)
                               : embedding_set_to_csv(set));
}

EmbeddingSet subset(const EmbeddingSet& set,
                    std::span<const std::size_t> rows) {
  EmbeddingSet out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), set.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) =
        set.X.row(static_cast<Eigen::Index>(rows[i]));
  }
  for (const auto& a : set.attributes) {
    AttributeLabels s{a.name, a.num_classes, {}};
    s.labels.reserve(rows.size());
    for (std::size_t r : rows) s.labels.push_back(a.labels[r]);
    out.attributes.push_back(std::move(s));
  }
  if (set.task_labels) {
    Labels t;
    t.reserve(rows.size());
    for (std::size_t r : rows) t.push_back((*set.task_labels)[r]);
    out.task_labels = std::move(t);
  }
  return out;
}

void ProjectorRecord::validate() const {
  if (P.rows() == 0 || P.rows() != P.cols()) {
    throw InputError("projector for \"" + attribute + "\" is not square");
  }
  if (!P.allFinite()) {
    throw InputError("projector for \"" + attribute + "\" has non-finite entries");
  }
  const double asym = asymmetry(P);
  if (asym > kSymmetryTolerance) {
    throw InputError("projector for \"" + attribute +
                     "\" is not symmetric (max asymmetry " +
                     std::to_string(asym) + ")");
  }
}

double ProjectorRecord::idempotence_error() const { return max_abs(P * P - P); }

std::string serialize_projector(const ProjectorRecord& rec) {
  rec.validate();
  detail::ByteWriter w;
  w.magic(kProjectorMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(rec.P.rows()));
  w.u32(rec.probe_count);
  w.f64(rec.achieved_gap);
  w.matrix(rec.P);
  // Provenance trailer.
  w.str(rec.attribute);
  w.str(rec.rff_spec_id);
  w.u32(rec.refinements);
  w.u8(rec.converged ? 1 : 0);
  return w.bytes();
}

ProjectorRecord parse_projector(const std::string& bytes,
                                const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kProjectorMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  ProjectorRecord rec;
  const std::uint32_t d = r.u32();
  if (d == 0) r.fail("zero dimension");
  rec.probe_count = r.u32();
  rec.achieved_gap = r.f64();
  rec.P = r.matrix(d, d);
  rec.attribute = r.str();
  rec.rff_spec_id = r.str();
  rec.refinements = r.u32();
  const std::uint8_t converged = r.u8();
  if (converged > 1) r.fail("bad convergence flag");
  rec.converged = converged == 1;
  if (!r.at_end()) r.fail("trailing bytes");
  try {
    rec.validate();
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return rec;
}

void save_projector(const ProjectorRecord& rec, const std::string& path) {
  detail::write_file(path, serialize_projector(rec));
}

ProjectorRecord load_projector(const std::string& path) {
  return parse_projector(detail::read_file(path), path);
}

SplitIndices split_indices(std::size_t n, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw InputError("split fractions must be positive");
  }
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) {
    throw InputError("split fractions sum to " + std::to_string(total) +
                     ", expected 1");
  }
  const auto n_train =
      static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n)));
  const auto n_val =
      static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw InputError("N=" + std::to_string(n) +
                     " is too small for the requested split fractions");
  }
  CounterRng rng(seed, /*stream=*/0x5911);
  const auto order = shuffled_indices(n, rng);
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

DatasetSplit split_dataset(const EmbeddingSet& set,
                           std::array<double, 3> fractions,
                           std::uint64_t seed) {
  DatasetSplit out;
  out.indices =
      split_indices(static_cast<std::size_t>(set.size()), fractions, seed);
  out.train = subset(set, out.indices.train);
  out.val = subset(set, out.indices.val);
  out.test = subset(set, out.indices.test);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(
    std::size_t n, double holdout, std::uint64_t seed) {
  if (n < 2) throw InputError("need at least 2 rows for a held-out split");
  if (!(holdout > 0.0 && holdout < 1.0)) {
    throw InputError("holdout fraction must lie in (0, 1)");
  }
  auto n_hold = static_cast<std::size_t>(
      std::floor(holdout * static_cast<double>(n)));
  n_hold = std::clamp<std::size_t>(n_hold, 1, n - 1);
  CounterRng rng(seed, /*stream=*/0x401d);
  const auto order = shuffled_indices(n, rng);
  std::vector<std::size_t> fit(order.begin(), order.end() - n_hold);
  std::vector<std::size_t> hold(order.end() - n_hold, order.end());
  return {std::move(fit), std::move(hold)};
}

}  // namespace nullgate
