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
#include <cstring>
#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "nullgate/embedding_io.hpp"
#include "nullgate/inlp.hpp"
#include "nullgate/rng.hpp"

namespace nullgate {
namespace {

EmbeddingSet tiny_set() {
  EmbeddingSet s;
  s.X.resize(3, 2);
  s.X << 0.5f, -1.0f, 2.0f, 0.25f, -3.5f, 4.0f;
  s.attributes.push_back({"g", 2, {0, 1, 1}});
  s.task_labels = Labels{2, 0, 1};
  return s;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

TEST(CounterRngTest, SameKeyAndStreamReplay) {
  CounterRng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(CounterRngTest, UniformAndNormalMoments) {
  CounterRng rng(7);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(CounterRngTest, BelowStaysInRangeAndCoversIt) {
  CounterRng rng(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(CounterRngTest, ShuffleIsPermutation) {
  CounterRng rng(5);
  auto idx = shuffled_indices(50, rng);
  std::set<std::size_t> s(idx.begin(), idx.end());
  EXPECT_EQ(s.size(), 50u);
  EXPECT_EQ(*s.rbegin(), 49u);
}

TEST(ChecksumTest, MatchesIndependentFnv1a) {
  Matrix m(2, 2);
  m << 1.0, -2.5, 3.25, 0.0;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      unsigned char bytes[8];
      const double v = m(i, j);
      std::memcpy(bytes, &v, 8);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  EXPECT_EQ(checksum(m), h);
  Matrix m2 = m;
  m2(1, 1) = 1e-300;
  EXPECT_NE(checksum(m2), h);
}

TEST(EmbeddingIoTest, BinaryLayoutMatchesHandEncoding) {
  const EmbeddingSet s = tiny_set();
  std::string expected = "NDBS";
  put_u32(expected, 1);
  put_u32(expected, 3);
  put_u32(expected, 2);
  put_u32(expected, 1);
  put_u32(expected, 1);
  expected += "g";
  put_u32(expected, 2);
  for (int v : {0, 1, 1}) put_u32(expected, static_cast<std::uint32_t>(v));
  put_u32(expected, 1);
  for (int v : {2, 0, 1}) put_u32(expected, static_cast<std::uint32_t>(v));
  for (float f : {0.5f, -1.0f, 2.0f, 0.25f, -3.5f, 4.0f}) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(expected, bits);
  }
  EXPECT_EQ(serialize_embedding_set(s), expected);
}

TEST(EmbeddingIoTest, BinaryRoundTripIsByteIdentical) {
  EmbeddingSet s;
  CounterRng rng(9);
  s.X.resize(2000, 64);
  for (Eigen::Index i = 0; i < s.X.size(); ++i) {
    s.X.data()[i] = static_cast<float>(rng.normal());
  }
  Labels g(2000);
  for (auto& v : g) v = static_cast<int>(rng.below(3));
  s.attributes.push_back({"age", 3, g});
  const std::string bytes = serialize_embedding_set(s);
  const EmbeddingSet back = parse_embedding_set(bytes);
  EXPECT_EQ(back.size(), 2000);
  EXPECT_EQ(back.dim(), 64);
  EXPECT_FALSE(back.task_labels.has_value());
  EXPECT_EQ(serialize_embedding_set(back), bytes);
}

TEST(EmbeddingIoTest, TruncatedBinaryFails) {
  const std::string bytes = serialize_embedding_set(tiny_set());
  EXPECT_THROW(parse_embedding_set(bytes.substr(0, bytes.size() - 3)), InputError);
  EXPECT_THROW(parse_embedding_set("XXXX" + bytes.substr(4)), InputError);
}

TEST(EmbeddingIoTest, CsvParsesThreeRows) {
  const std::string csv = "h_0,h_1,attr:g\n0.5,1\n";
  EXPECT_THROW(embedding_set_from_csv(csv), InputError);
  const EmbeddingSet s =
      embedding_set_from_csv("h_0,h_1,attr:g\n0.5,1,0\n-2,3,1\n1e-3,0,1\n");
  EXPECT_EQ(s.size(), 3);
  EXPECT_EQ(s.dim(), 2);
  EXPECT_EQ(s.attribute("g").labels, (Labels{0, 1, 1}));
  EXPECT_FLOAT_EQ(s.X(1, 0), -2.0f);
}

TEST(EmbeddingIoTest, CsvNanNamesTheRow) {
  try {
    embedding_set_from_csv("h_0,h_1,attr:g\n0.5,1,0\nNaN,3,1\n");
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(EmbeddingIoTest, CsvRoundTrip) {
  const EmbeddingSet s = tiny_set();
  const EmbeddingSet back = embedding_set_from_csv(embedding_set_to_csv(s));
  EXPECT_EQ(serialize_embedding_set(back), serialize_embedding_set(s));
}

TEST(EmbeddingIoTest, ValidationRejectsBadLabels) {
  EmbeddingSet s = tiny_set();
  s.attributes[0].labels[1] = 2;
  EXPECT_THROW(s.validate(), InputError);
  s = tiny_set();
  s.X(0, 0) = std::nanf("");
  EXPECT_THROW(s.validate(), InputError);
  s = tiny_set();
  EXPECT_THROW(s.attribute("missing"), InputError);
}

TEST(EmbeddingIoTest, FileRoundTripBothFormats) {
  const auto dir = std::filesystem::temp_directory_path() / "nullgate_io_test";
  const EmbeddingSet s = tiny_set();
  for (const char* name : {"a.ndbs", "a.csv"}) {
    const std::string path = (dir / name).string();
    save_embedding_set(s, path, format_from_path(path));
    const EmbeddingSet back = load_embedding_set(path, format_from_path(path));
    EXPECT_EQ(serialize_embedding_set(back), serialize_embedding_set(s));
  }
  std::filesystem::remove_all(dir);
}

TEST(ProjectorIoTest, IdentityRoundTrip) {
  ProjectorRecord rec;
  rec.attribute = "g";
  rec.P = Matrix::Identity(4, 4);
  const ProjectorRecord back = parse_projector(serialize_projector(rec));
  EXPECT_EQ(back.P, rec.P);
  EXPECT_EQ(back.attribute, "g");
}

TEST(ProjectorIoTest, RandomProjectorBitIdentical) {
  CounterRng rng(3);
  Matrix W(3, 10);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = rng.normal();
  ProjectorRecord rec;
  rec.attribute = "occupation";
  rec.P = nullspace_projector(W);
  rec.probe_count = 3;
  rec.achieved_gap = 0.0123;
  rec.rff_spec_id = "rff-d10-D0-s3";
  rec.refinements = 2;
  rec.converged = false;
  const std::string bytes = serialize_projector(rec);
  const ProjectorRecord back = parse_projector(bytes);
  EXPECT_EQ(std::memcmp(back.P.data(), rec.P.data(), sizeof(double) * 100), 0);
  EXPECT_EQ(back.probe_count, 3u);
  EXPECT_EQ(back.achieved_gap, 0.0123);
  EXPECT_EQ(back.rff_spec_id, rec.rff_spec_id);
  EXPECT_FALSE(back.converged);
  EXPECT_EQ(serialize_projector(back), bytes);
}

TEST(ProjectorIoTest, TruncatedAndAsymmetricFail) {
  ProjectorRecord rec;
  rec.attribute = "g";
  rec.P = Matrix::Identity(3, 3);
  const std::string bytes = serialize_projector(rec);
  EXPECT_THROW(parse_projector(bytes.substr(0, 40)), InputError);
  rec.P(0, 1) = 1e-6;
  EXPECT_THROW(rec.validate(), InputError);
}

TEST(SplitTest, SizesFloorTrainAndVal) {
  const SplitIndices s = split_indices(10, {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(SplitTest, DeterministicDisjointExhaustive) {
  const SplitIndices a = split_indices(103, {0.6, 0.2, 0.2}, 11);
  const SplitIndices b = split_indices(103, {0.6, 0.2, 0.2}, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  std::set<std::size_t> all;
  for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(part->begin(), part->end());
  EXPECT_EQ(all.size(), 103u);
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), 103u);
}

TEST(SplitTest, BadFractionsFail) {
  EXPECT_THROW(split_indices(10, {0.5, 0.5, 0.5}, 1), InputError);
  EXPECT_THROW(split_indices(2, {0.8, 0.1, 0.1}, 1), InputError);
}

TEST(SplitTest, SplitDatasetCarriesLabels) {
  const DatasetSplit sp = split_dataset(tiny_set(), {0.4, 0.34, 0.26}, 2);
  EXPECT_EQ(sp.train.size() + sp.val.size() + sp.test.size(), 3);
  ASSERT_TRUE(sp.train.task_labels.has_value());
  EXPECT_EQ(sp.train.attributes[0].labels.size(), static_cast<std::size_t>(sp.train.size()));
}

}  // namespace
}  // namespace nullgate
