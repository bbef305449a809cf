#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "fsl/binary_io.hpp"
#include "fsl/datakit/dataset.hpp"
#include "fsl/datakit/episode.hpp"
#include "fsl/datakit/io.hpp"
#include "fsl/datakit/rng.hpp"
#include "fsl/error.hpp"

namespace dk = fsl::datakit;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fsl_datakit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

dk::Dataset small_dataset(std::uint64_t seed = 1) {
  dk::SyntheticSpec spec;
  spec.seed = seed;
  return dk::make_synthetic(spec);
}

}  // namespace

// Philox4x32-10 known-answer vector: zero key, zero counter.
TEST(CounterRng, PhiloxKnownAnswer) {
  dk::CounterRng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe169c58d6627e8d5ull);
  EXPECT_EQ(rng.next_u64(), 0x9b00dbd8bc57ac4cull);
}

TEST(CounterRng, SubstreamsAreReproducibleAndDistinct) {
  auto a = dk::CounterRng::substream(42, "episodes", 3);
  auto b = dk::CounterRng::substream(42, "episodes", 3);
  auto c = dk::CounterRng::substream(42, "episodes", 4);
  auto d = dk::CounterRng::substream(42, "pretrain", 3);
  const auto x = a.next_u64();
  EXPECT_EQ(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
  EXPECT_NE(x, d.next_u64());
}

TEST(CounterRng, DistributionMoments) {
  dk::CounterRng rng(9);
  const int n = 100000;
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

TEST(CounterRng, BelowIsInRangeAndCoversAll) {
  dk::CounterRng rng(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 1000, 150);
  EXPECT_THROW(rng.below(0), fsl::ContractError);
}

TEST(CounterRng, GammaMean) {
  dk::CounterRng rng(13);
  for (double shape : {0.25, 1.0, 3.5}) {
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += rng.gamma(shape);
    EXPECT_NEAR(s / n, shape, 0.03 * std::max(1.0, shape)) << "shape " << shape;
  }
}

TEST(Synthetic, CardinalityContract) {
  const auto data = small_dataset();
  EXPECT_EQ(data.num_classes(), 20u);
  EXPECT_EQ(data.dim(), 16u);
  for (auto id : data.class_ids()) EXPECT_EQ(data.samples_in(id), 50u);
}

TEST(Synthetic, SameSpecIsIdentical) {
  EXPECT_EQ(small_dataset(3), small_dataset(3));
  EXPECT_NE(small_dataset(3), small_dataset(4));
}

TEST(Synthetic, VanishingNoiseCollapsesToCenters) {
  dk::SyntheticSpec spec;
  spec.noise_sigma = 1e-12;
  spec.samples_per_class = 4;
  const auto data = dk::make_synthetic(spec);
  for (auto id : data.class_ids()) {
    const auto first = data.sample(id, 0);
    for (std::size_t i = 1; i < 4; ++i) {
      const auto s = data.sample(id, i);
      for (std::size_t d = 0; d < data.dim(); ++d) EXPECT_NEAR(s[d], first[d], 1e-10);
    }
  }
}

TEST(Synthetic, RejectsInvalidSpec) {
  dk::SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  EXPECT_THROW(dk::make_synthetic(spec), fsl::ConfigError);
  spec = {};
  spec.n_classes = 0;
  EXPECT_THROW(dk::make_synthetic(spec), fsl::ConfigError);
}

TEST(Dataset, RejectsDuplicateIdsAndRaggedRows) {
  std::vector<dk::ClassData> dup = {{1, {0.0, 1.0}}, {1, {2.0, 3.0}}};
  EXPECT_THROW(dk::Dataset("d", 2, dup), fsl::Error);
  std::vector<dk::ClassData> ragged = {{1, {0.0, 1.0, 2.0}}};
  EXPECT_THROW(dk::Dataset("d", 2, ragged), fsl::Error);
}

TEST(Dataset, GatherLabelsByAscendingId) {
  std::vector<dk::ClassData> classes = {{7, {1.0, 1.0}}, {3, {2.0, 2.0, 3.0, 3.0}}};
  dk::Dataset data("d", 2, classes);
  const dk::ClassId ids[] = {7, 3};
  const auto batch = data.gather(ids);
  ASSERT_EQ(batch.size(), 3u);
  // Class 3 comes first in ascending order, so it is label 0.
  EXPECT_EQ(batch.labels, (std::vector<std::uint32_t>{0, 0, 1}));
  EXPECT_EQ(batch.row(2)[0], 1.0);
}

TEST(Split, FractionsAndDisjointness) {
  const auto data = small_dataset();
  const auto split = dk::split_classes(data, {0.6, 0.2, 0.2}, 11);
  EXPECT_EQ(split.train.size(), 12u);
  EXPECT_EQ(split.val.size(), 4u);
  EXPECT_EQ(split.test.size(), 4u);
  std::set<dk::ClassId> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (auto id : *part) EXPECT_TRUE(seen.insert(id).second) << "class " << id << " repeated";
  }
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(dk::split_classes(data, {0.6, 0.2, 0.2}, 11), split);
  EXPECT_NE(dk::split_classes(data, {0.6, 0.2, 0.2}, 12), split);
}

TEST(Split, RejectsBadFractions) {
  const auto data = small_dataset();
  EXPECT_THROW(dk::split_classes(data, {0.7, 0.2, 0.2}, 1), fsl::ConfigError);
  EXPECT_THROW(dk::split_classes(data, {-0.1, 0.6, 0.5}, 1), fsl::ConfigError);
}

TEST(Episode, Cardinalities) {
  const auto data = small_dataset();
  const auto ids = data.class_ids();
  for (std::uint32_t shot : {1u, 5u}) {
    dk::CounterRng rng(shot);
    const auto ep = dk::sample_episode(data, ids, {5, shot, 15}, rng);
    EXPECT_EQ(ep.support.size(), 5u * shot);
    EXPECT_EQ(ep.query.size(), 75u);
    EXPECT_TRUE(std::is_sorted(ep.class_ids.begin(), ep.class_ids.end()));
    EXPECT_NO_THROW(ep.validate());
  }
}

TEST(Episode, EqualRngStateGivesIdenticalEpisode) {
  const auto data = small_dataset();
  const auto ids = data.class_ids();
  dk::CounterRng a(77), b(77);
  EXPECT_EQ(dk::sample_episode(data, ids, {5, 1, 15}, a), dk::sample_episode(data, ids, {5, 1, 15}, b));
}

TEST(Episode, SupportAndQueryAreDisjointSamples) {
  const auto data = small_dataset();
  dk::CounterRng rng(3);
  const auto ep = dk::sample_episode(data, data.class_ids(), {5, 5, 15}, rng);
  for (std::size_t i = 0; i < ep.support.size(); ++i) {
    for (std::size_t j = 0; j < ep.query.size(); ++j) {
      const auto s = ep.support.row(i);
      const auto q = ep.query.row(j);
      EXPECT_FALSE(std::equal(s.begin(), s.end(), q.begin()));
    }
  }
}

TEST(Episode, InfeasibleRequestsNameTheProblem) {
  const auto data = small_dataset();
  const auto ids = data.class_ids();
  dk::CounterRng rng(1);
  EXPECT_THROW(dk::sample_episode(data, ids, {50, 1, 15}, rng), fsl::SamplingError);
  try {
    dk::sample_episode(data, ids, {5, 30, 30}, rng);
    FAIL() << "expected SamplingError";
  } catch (const fsl::SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("class"), std::string::npos);
  }
}

TEST(EpisodeIo, RoundTrip) {
  const auto data = small_dataset();
  std::vector<dk::Episode> eps;
  for (std::uint64_t i = 0; i < 4; ++i) {
    auto rng = dk::CounterRng::substream(1, "episodes", i);
    eps.push_back(dk::sample_episode(data, data.class_ids(), {5, 2, 3}, rng));
  }
  const auto path = scratch_dir("roundtrip") / "eps.fsep";
  dk::save_episodes(path, eps);
  EXPECT_EQ(dk::load_episodes(path), eps);
}

TEST(EpisodeIo, EmptyListIsValid) {
  const auto path = scratch_dir("empty") / "none.fsep";
  dk::save_episodes(path, {});
  EXPECT_TRUE(dk::load_episodes(path).empty());
}

TEST(EpisodeIo, CorruptionIsDetected) {
  const auto data = small_dataset();
  auto rng = dk::CounterRng(8);
  std::vector<dk::Episode> eps = {dk::sample_episode(data, data.class_ids(), {5, 1, 2}, rng)};
  auto bytes = dk::encode_episodes(eps);
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(dk::decode_episodes(bytes), fsl::ChecksumError);
  bytes = dk::encode_episodes(eps);
  bytes.resize(bytes.size() - 7);
  EXPECT_THROW(dk::decode_episodes(bytes), fsl::IoError);
}

TEST(EpisodeIo, RejectsFutureVersion) {
  auto bytes = dk::encode_episodes({});
  bytes[4] = 99;  // version follows the 4-byte magic
  // Re-seal so only the version is wrong.
  bytes.resize(bytes.size() - 4);
  const auto crc = fsl::crc32(bytes);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  EXPECT_THROW(dk::decode_episodes(bytes), fsl::FormatVersionError);
}

TEST(DatasetIo, RoundTripAndCsv) {
  const auto data = small_dataset();
  const auto dir = scratch_dir("dataset");
  dk::save_dataset(dir / "d.fsds", data);
  EXPECT_EQ(dk::load_dataset(dir / "d.fsds"), data);

  {
    std::ofstream csv(dir / "d.csv");
    csv << "label,x0,x1\n# comment\n2,1.5,2.5\n0,0.5,-1\n\n2,3,4\n";
  }
  const auto loaded = dk::load_csv_dataset(dir / "d.csv");
  EXPECT_EQ(loaded.dim(), 2u);
  EXPECT_EQ(loaded.class_ids(), (std::vector<dk::ClassId>{0, 2}));
  EXPECT_EQ(loaded.samples_in(2), 2u);
  EXPECT_EQ(loaded.sample(2, 1)[1], 4.0);
}

TEST(DatasetIo, MissingFileIsIoError) {
  EXPECT_THROW(dk::load_dataset("/nonexistent/dir/x.fsds"), fsl::IoError);
}

TEST(Augment, ContractExamples) {
  const auto data = small_dataset();
  const dk::ClassId ids[] = {0, 1};
  const auto batch = data.gather(ids);
  dk::CounterRng r0(1);
  EXPECT_EQ(dk::augment(batch, 0.0, r0), batch);
  dk::CounterRng r1(2), r2(2);
  const auto a = dk::augment(batch, 0.3, r1);
  EXPECT_EQ(a.features.size(), batch.features.size());
  EXPECT_EQ(a.labels, batch.labels);
  EXPECT_NE(a, batch);
  EXPECT_EQ(a, dk::augment(batch, 0.3, r2));
}

TEST(Crc32, KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(fsl::crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())),
            0xCBF43926u);
}
