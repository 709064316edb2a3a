#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "conmil/data.hpp"
#include "testutil.hpp"

using namespace conmil;
using namespace conmil::data;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("conmil_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec quick_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.length = 48;
  spec.motif_length = 12;
  spec.seed = seed;
  return spec;
}

std::size_t count_runs(const NdArray& labels, std::size_t column) {
  std::size_t runs = 0;
  bool inside = false;
  for (std::size_t t = 0; t < labels.rows(); ++t) {
    const bool on = labels.at(t, column) > 0.5;
    if (on && !inside) ++runs;
    inside = on;
  }
  return runs;
}

}  // namespace

TEST_CASE("generator honors the bag/instance label contract") {
  const auto generated = generate(quick_spec(3), 40);
  REQUIRE(generated.size() == 120);
  for (const auto& gb : generated) {
    const Bag& bag = gb.bag;
    // Label class contributes at least one positive instance.
    CHECK(count_runs(bag.instance_labels, bag.label) >= 1);
    // Single-label mode: other classes have no instances at all.
    for (std::size_t k = 0; k < 3; ++k)
      if (k != bag.label) CHECK(count_runs(bag.instance_labels, k) == 0);
  }
}

TEST_CASE("motif spans counted from instance labels match the draw log") {
  const auto generated = generate(quick_spec(11), 60);
  for (const auto& gb : generated) {
    std::map<std::size_t, std::size_t> drawn;
    for (const auto& [cls, start] : gb.placements) {
      (void)start;
      drawn[cls] += 1;
    }
    for (const auto& [cls, count] : drawn)
      CHECK(count_runs(gb.bag.instance_labels, cls) == count);
  }
}

TEST_CASE("mixing flag keeps the label class in the strict majority") {
  auto spec = quick_spec(5);
  spec.mix_other_classes = true;
  spec.motifs_min = 2;
  spec.motifs_max = 3;
  const auto generated = generate(spec, 50);
  for (const auto& gb : generated) {
    std::map<std::size_t, std::size_t> drawn;
    for (const auto& [cls, start] : gb.placements) {
      (void)start;
      drawn[cls] += 1;
    }
    for (const auto& [cls, count] : drawn)
      if (cls != gb.bag.label) CHECK(count < drawn[gb.bag.label]);
  }
}

TEST_CASE("degenerate generator settings still mark instance labels") {
  auto spec = quick_spec(7);
  spec.noise_sigma = 0.0;
  spec.amplitude = 0.0;
  const auto generated = generate(spec, 5);
  for (const auto& gb : generated) {
    for (std::size_t i = 0; i < gb.bag.series.size(); ++i) CHECK(gb.bag.series[i] == 0.0);
    CHECK(count_runs(gb.bag.instance_labels, gb.bag.label) >= 1);
  }
}

TEST_CASE("generation is deterministic and reproduces identical archive bytes") {
  const auto dir_a = fresh_dir("det_a");
  const auto dir_b = fresh_dir("det_b");
  for (const auto& dir : {dir_a, dir_b}) {
    const auto bags = generate_bags(quick_spec(13), 20);
    std::vector<std::string> splits(bags.size(), "train");
    for (std::size_t i = 0; i < bags.size(); ++i)
      if (i % 4 == 3) splits[i] = i % 8 == 7 ? "test" : "val";
    write_archive(dir, 3, 1, bags, splits);
  }
  CHECK(archive_fingerprint(dir_a) == archive_fingerprint(dir_b));
}

TEST_CASE("archive round trip reproduces series bit-exactly") {
  const auto dir = fresh_dir("roundtrip");
  const auto bags = generate_bags(quick_spec(17), 10);
  std::vector<std::string> splits(bags.size(), "train");
  write_archive(dir, 3, 1, bags, splits);
  const auto archive = read_archive(dir);
  REQUIRE(archive.samples.size() == bags.size());

  const auto loaded = load_split(archive, "train", false);
  REQUIRE(loaded.size() == bags.size());
  for (std::size_t i = 0; i < bags.size(); ++i) {
    REQUIRE(loaded[i].series.rows() == bags[i].series.rows());
    for (std::size_t j = 0; j < bags[i].series.size(); ++j) {
      const double expect = static_cast<double>(static_cast<float>(bags[i].series[j]));
      CHECK(loaded[i].series[j] == expect);
    }
    CHECK(loaded[i].instance_labels.same_shape(bags[i].instance_labels));
  }

  // Re-writing the loaded archive reproduces the files byte for byte.
  const auto dir2 = fresh_dir("roundtrip2");
  std::vector<std::string> splits2;
  std::vector<Bag> bags2;
  for (const auto& e : archive.samples) {
    bags2.push_back(load_sample(archive, e, false));
    splits2.push_back(e.split);
  }
  write_archive(dir2, 3, 1, bags2, splits2);
  CHECK(archive_fingerprint(dir) == archive_fingerprint(dir2));
}

TEST_CASE("standardized train split has zero mean and unit variance") {
  const auto dir = fresh_dir("standardize");
  auto spec = quick_spec(19);
  spec.channels = 2;
  const auto bags = generate_bags(spec, 30);
  std::vector<std::string> splits(bags.size(), "train");
  for (std::size_t i = 0; i < bags.size(); ++i)
    if (i % 3 == 2) splits[i] = "test";
  write_archive(dir, 3, 2, bags, splits);
  const auto archive = read_archive(dir);
  const auto train = load_split(archive, "train", true);

  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const Bag& bag : train)
      for (std::size_t t = 0; t < bag.series.rows(); ++t) {
        mean += bag.series.at(t, c);
        sq += bag.series.at(t, c) * bag.series.at(t, c);
        ++n;
      }
    mean /= static_cast<double>(n);
    const double stddev = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(stddev - 1.0) < 1e-6);
  }
}

TEST_CASE("split sizes follow the fractions exactly") {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 100; ++i) labels.push_back(i % 2);
  const auto assigned =
      assign_splits(labels, {}, {0.6, 0.2, 0.2}, {"train", "val", "test"}, SplitMode::Random, 5);
  std::map<std::string, std::size_t> counts;
  for (const auto& s : assigned) counts[s] += 1;
  CHECK(counts["train"] == 60);
  CHECK(counts["val"] == 20);
  CHECK(counts["test"] == 20);
}

TEST_CASE("group mode keeps every group in one split") {
  std::vector<std::size_t> labels(50, 0);
  std::vector<std::string> groups;
  for (std::size_t i = 0; i < 50; ++i) groups.push_back("g" + std::to_string(i % 5));
  const auto assigned =
      assign_splits(labels, groups, {0.6, 0.2, 0.2}, {"train", "val", "test"}, SplitMode::Group, 3);
  std::map<std::string, std::set<std::string>> splits_of_group;
  for (std::size_t i = 0; i < 50; ++i) splits_of_group[groups[i]].insert(assigned[i]);
  for (const auto& [group, splits] : splits_of_group) {
    (void)group;
    CHECK(splits.size() == 1);
  }

  CHECK_THROWS_AS(
      assign_splits(labels, {}, {0.6, 0.2, 0.2}, {"train", "val", "test"}, SplitMode::Group, 3),
      std::invalid_argument);
}

TEST_CASE("random splits stay class-stratified across seeds") {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 300; ++i) labels.push_back(i % 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto assigned =
        assign_splits(labels, {}, {0.6, 0.2, 0.2}, {"train", "val", "test"}, SplitMode::Random,
                      seed);
    std::map<std::string, std::map<std::size_t, double>> class_share;
    std::map<std::string, double> totals;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      class_share[assigned[i]][labels[i]] += 1.0;
      totals[assigned[i]] += 1.0;
    }
    for (const auto& [split, by_class] : class_share)
      for (const auto& [cls, count] : by_class) {
        (void)cls;
        CHECK(std::abs(count / totals[split] - 1.0 / 3.0) <= 0.05);
      }
  }
}

TEST_CASE("archive-level split returns three disjoint sub-archives") {
  const auto dir = fresh_dir("arch_split");
  const auto bags = generate_bags(quick_spec(29), 40);
  std::vector<std::string> splits(bags.size(), "train");  // reassigned below
  write_archive(dir, 3, 1, bags, splits);
  const auto archive = read_archive(dir);

  const auto parts = split(archive, {0.6, 0.2, 0.2}, SplitMode::Random, 7);
  CHECK(parts.train.samples.size() == 72);
  CHECK(parts.val.samples.size() == 24);
  CHECK(parts.test.samples.size() == 24);
  std::set<std::string> seen;
  for (const auto* part : {&parts.train, &parts.val, &parts.test})
    for (const auto& e : part->samples) CHECK(seen.insert(e.id).second);
  CHECK(seen.size() == bags.size());

  // Group mode requires a group column.
  CHECK_THROWS_AS(split(archive, {0.6, 0.2, 0.2}, SplitMode::Group, 7), std::invalid_argument);
}

TEST_CASE("fraction validation") {
  std::vector<std::size_t> labels(10, 0);
  CHECK_THROWS_AS(
      assign_splits(labels, {}, {0.5, 0.2, 0.2}, {"a", "b", "c"}, SplitMode::Random, 1),
      std::invalid_argument);
}

TEST_CASE("inject_shift") {
  const auto dir = fresh_dir("shift_src");
  const auto bags = generate_bags(quick_spec(23), 12);
  std::vector<std::string> splits;
  for (std::size_t i = 0; i < bags.size(); ++i)
    splits.push_back(i % 3 == 0 ? "test" : (i % 3 == 1 ? "train" : "val"));
  write_archive(dir, 3, 1, bags, splits);
  const auto archive = read_archive(dir);

  SUBCASE("magnitude zero is the identity for every kind") {
    for (auto kind : {ShiftKind::AmplitudeScale, ShiftKind::NoiseAdd, ShiftKind::LabelPrior}) {
      const auto out = fresh_dir("shift_zero");
      inject_shift(archive, kind, 0.0, out);
      CHECK(archive_fingerprint(dir) == archive_fingerprint(out));
    }
  }

  SUBCASE("amplitude-scale doubles every test series") {
    const auto out = fresh_dir("shift_scale");
    const auto shifted = inject_shift(archive, ShiftKind::AmplitudeScale, 2.0, out);
    const auto before = load_split(archive, "test", false);
    const auto after = load_split(shifted, "test", false);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i)
      for (std::size_t j = 0; j < before[i].series.size(); ++j)
        CHECK(after[i].series[j] ==
              doctest::Approx(2.0 * before[i].series[j]).epsilon(1e-6));
    // Non-test splits are untouched.
    const auto train_before = load_split(archive, "train", false);
    const auto train_after = load_split(shifted, "train", false);
    for (std::size_t i = 0; i < train_before.size(); ++i)
      CHECK(testutil::max_abs_diff(train_before[i].series, train_after[i].series) == 0.0);
  }

  SUBCASE("noise-add is deterministic") {
    const auto out1 = fresh_dir("shift_noise1");
    const auto out2 = fresh_dir("shift_noise2");
    inject_shift(archive, ShiftKind::NoiseAdd, 0.5, out1);
    inject_shift(archive, ShiftKind::NoiseAdd, 0.5, out2);
    CHECK(archive_fingerprint(out1) == archive_fingerprint(out2));
  }

  SUBCASE("label-prior thins later classes of the test split") {
    const auto out = fresh_dir("shift_prior");
    const auto shifted = inject_shift(archive, ShiftKind::LabelPrior, 0.9, out);
    std::map<std::size_t, std::size_t> before, after;
    for (const auto& e : archive.samples)
      if (e.split == "test") before[e.label] += 1;
    for (const auto& e : shifted.samples)
      if (e.split == "test") after[e.label] += 1;
    CHECK(after[0] == before[0]);
    CHECK(after[2] < before[2]);
  }

  SUBCASE("unknown kind is rejected at the string boundary") {
    CHECK_THROWS_AS(shift_kind_from_string("fourier"), std::invalid_argument);
  }
}

TEST_CASE("spec validation") {
  auto spec = quick_spec(1);
  spec.motif_length = 100;
  CHECK_THROWS_AS(spec.with_defaults(), std::invalid_argument);

  spec = quick_spec(1);
  spec.motifs = {{MotifKind::Sine, 1.0}, {MotifKind::Sine, 1.0}, {MotifKind::Sine, 2.0}};
  CHECK_THROWS_AS(spec.with_defaults(), std::invalid_argument);

  spec = quick_spec(1);
  spec.noise_sigma = -0.5;
  CHECK_THROWS_AS(spec.with_defaults(), std::invalid_argument);
}
