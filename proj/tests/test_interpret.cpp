#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "conmil/data.hpp"
#include "conmil/interpret.hpp"
#include "conmil/jsonschema.hpp"
#include "conmil/train.hpp"
#include "testutil.hpp"

using namespace conmil;
using namespace conmil::interpret;

namespace {

mil::PoolingOutput qtrans_output(std::size_t num_classes, std::size_t t_len,
                                 std::mt19937_64& g) {
  mil::PoolingOutput out;
  out.attention = NdArray({num_classes, t_len});
  for (std::size_t i = 0; i < out.attention.size(); ++i)
    out.attention[i] = 0.05 + 0.9 * rng::uniform01(g);
  out.pooled = testutil::random_array({num_classes, 4}, g);
  out.logits = testutil::random_array({1, num_classes}, g);
  return out;
}

NdArray toy_series() {
  NdArray s({12, 1});
  for (std::size_t t = 0; t < 12; ++t)
    s.at(t, 0) = std::sin(0.5 * static_cast<double>(t)) + 0.1 * static_cast<double>(t);
  return s;
}

}  // namespace

TEST_CASE("extract_heatmaps") {
  std::mt19937_64 g(3);
  const auto output = qtrans_output(2, 9, g);

  SUBCASE("per-class request returns one map per class") {
    const auto maps = extract_heatmaps(output, {0, 1}, 2);
    REQUIRE(maps.size() == 2);
    for (const auto& m : maps) {
      CHECK(m.weights.size() == 9);
      CHECK(!m.replicated_from_global);
    }
    // Values are the attention entries, bit for bit.
    for (std::size_t t = 0; t < 9; ++t) {
      CHECK(maps[0].weights[t] == output.attention.at(0, t));
      CHECK(maps[1].weights[t] == output.attention.at(1, t));
    }
  }

  SUBCASE("global 1xT maps are replicated with a warning flag") {
    mil::PoolingOutput global;
    global.attention = NdArray({1, 6}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    const auto maps = extract_heatmaps(global, {0, 2}, 3);
    REQUIRE(maps.size() == 2);
    CHECK(maps[0].replicated_from_global);
    CHECK(maps[1].replicated_from_global);
    CHECK(maps[0].weights == maps[1].weights);
  }

  SUBCASE("class index out of range") {
    CHECK_THROWS_AS(extract_heatmaps(output, {5}, 2), std::invalid_argument);
  }
}

TEST_CASE("minmax normalization") {
  ClassHeatmap map;
  map.class_index = 0;
  map.weights = {0.2, 0.6, 0.4};
  const auto norm = minmax_normalize(map);
  CHECK(norm.normalization == "minmax");
  CHECK(norm.weights[0] == doctest::Approx(0.0));
  CHECK(norm.weights[1] == doctest::Approx(1.0));
  CHECK(norm.weights[2] == doctest::Approx(0.5));

  SUBCASE("constant map becomes all zeros") {
    map.weights = {0.7, 0.7, 0.7};
    const auto zeros = minmax_normalize(map);
    for (double w : zeros.weights) CHECK(w == 0.0);
  }

  SUBCASE("idempotent and order-preserving") {
    const auto twice = minmax_normalize(norm);
    CHECK(twice.weights == norm.weights);
    for (std::size_t i = 0; i + 1 < map.weights.size(); ++i)
      for (std::size_t j = i + 1; j < map.weights.size(); ++j)
        CHECK((map.weights[i] < map.weights[j]) == (norm.weights[i] < norm.weights[j]));
  }
}

TEST_CASE("saliency_auroc") {
  SUBCASE("weights equal to labels rank perfectly") {
    CHECK(*saliency_auroc({1, 0, 1, 0}, {1, 0, 1, 0}) == doctest::Approx(1.0));
  }

  SUBCASE("hand toy with interleaved weights") {
    CHECK(*saliency_auroc({0.9, 0.1, 0.8, 0.2}, {1, 0, 1, 0}) == doctest::Approx(1.0));
  }

  SUBCASE("reversed ranking scores zero") {
    CHECK(*saliency_auroc({0.1, 0.9}, {1, 0}) == doctest::Approx(0.0));
  }

  SUBCASE("ties contribute half") {
    CHECK(*saliency_auroc({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5));
  }

  SUBCASE("degenerate labels are reported as absent") {
    CHECK(!saliency_auroc({0.5, 0.6}, {1, 1}).has_value());
    CHECK(!saliency_auroc({0.5, 0.6}, {0, 0}).has_value());
  }

  SUBCASE("permutation null averages one half") {
    std::mt19937_64 g(9);
    const std::size_t t_len = 24;
    std::vector<double> weights(t_len);
    for (auto& w : weights) w = rng::uniform01(g);
    std::vector<double> labels(t_len, 0.0);
    for (std::size_t i = 0; i < 8; ++i) labels[i] = 1.0;
    double sum = 0.0;
    const int trials = 10000;
    for (int trial = 0; trial < trials; ++trial) {
      auto order = rng::shuffled_indices(t_len, g);
      std::vector<double> permuted(t_len);
      for (std::size_t i = 0; i < t_len; ++i) permuted[i] = labels[order[i]];
      sum += *saliency_auroc(weights, permuted);
    }
    CHECK(std::abs(sum / trials - 0.5) < 0.02);
  }
}

TEST_CASE("render") {
  const NdArray series = toy_series();

  SUBCASE("deterministic byte output") {
    const std::string a = render(series);
    const std::string b = render(series);
    CHECK(a == b);
  }

  SUBCASE("zero heatmap renders fully transparent rectangles") {
    ClassHeatmap map;
    map.weights.assign(12, 0.0);
    const std::string svg = render(series, &map);
    CHECK(svg.find("fill-opacity=\"0.0000\"") != std::string::npos);
    CHECK(svg.find("fill-opacity=\"1.0000\"") == std::string::npos);
  }

  SUBCASE("heat overlay opacity follows the normalized weights") {
    ClassHeatmap map;
    map.weights.assign(12, 0.0);
    map.weights[3] = 1.0;
    map.weights[5] = 0.5;
    const std::string svg = render(series, &map);
    CHECK(svg.find("fill-opacity=\"1.0000\"") != std::string::npos);
    CHECK(svg.find("fill-opacity=\"0.5000\"") != std::string::npos);
  }

  SUBCASE("empty series is rejected") {
    CHECK_THROWS_AS(render(NdArray({0, 1})), std::invalid_argument);
  }

  SUBCASE("canvas scales with the channel count") {
    NdArray two({4, 2});
    const std::string svg = render(two);
    CHECK(svg.find("height=\"512\"") != std::string::npos);
  }

  SUBCASE("golden file for a fixed toy bag") {
    ClassHeatmap map;
    map.weights = {0, 0, 0, 0.2, 0.9, 1.0, 0.9, 0.2, 0, 0, 0, 0};
    const std::string svg = render(series, &map);
    CHECK(svg == testutil::read_text_file(testutil::golden_path("render_fixture.svg")));
  }
}

TEST_CASE("emit_prompt_package writes files and a schema-valid manifest") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "conmil_pkg_test";
  fs::remove_all(dir);
  std::mt19937_64 g(5);
  const auto output = qtrans_output(3, 12, g);
  const NdArray series = toy_series();

  const auto schema = nlohmann::json::parse(testutil::read_text_file(
      std::string(CONMIL_SOURCE_DIR) + "/schemas/prompt_package.schema.json"));

  SUBCASE("confident outcome carries one heatmap") {
    conformal::PredictionSet set;
    set.members = {2};
    const auto outcome = decision::stratify(set, 3);
    const auto maps = extract_heatmaps(output, set.members, 3);
    const auto pkg = emit_prompt_package("s1", series, outcome, maps, 0.05, dir / "s1");
    CHECK(pkg.set.size() == 1);
    CHECK(fs::exists(dir / "s1" / pkg.set[0].heatmap_svg));
    CHECK(fs::exists(dir / "s1" / pkg.set[0].weights_csv));
    CHECK(fs::exists(dir / "s1" / pkg.series_svg));
    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file((dir / "s1" / "package.json").string()));
    CHECK(jsonschema::validate(manifest, schema).empty());
    CHECK(manifest.at("stratum") == "Confident");
  }

  SUBCASE("uncertain outcome carries one heatmap per member") {
    conformal::PredictionSet set;
    set.members = {0, 1};
    const auto outcome = decision::stratify(set, 3);
    const auto maps = extract_heatmaps(output, set.members, 3);
    const auto pkg = emit_prompt_package("s2", series, outcome, maps, 0.05, dir / "s2");
    CHECK(pkg.set.size() == 2);
    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file((dir / "s2" / "package.json").string()));
    CHECK(jsonschema::validate(manifest, schema).empty());
    // Weights CSV holds t,weight rows for the full length.
    const std::string csv =
        testutil::read_text_file((dir / "s2" / pkg.set[0].weights_csv).string());
    CHECK(csv.rfind("t,weight\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  }

  SUBCASE("reject outcome emits a series-only package") {
    conformal::PredictionSet set;  // empty set -> Reject
    const auto outcome = decision::stratify(set, 3);
    const auto pkg = emit_prompt_package("s3", series, outcome, {}, 0.05, dir / "s3");
    CHECK(pkg.set.empty());
    CHECK(pkg.stratum == "Reject");
    const auto manifest =
        nlohmann::json::parse(testutil::read_text_file((dir / "s3" / "package.json").string()));
    CHECK(jsonschema::validate(manifest, schema).empty());
    CHECK(fs::exists(dir / "s3" / pkg.series_svg));
  }

  SUBCASE("missing heatmap for a member is an error") {
    conformal::PredictionSet set;
    set.members = {0, 1};
    const auto outcome = decision::stratify(set, 3);
    const auto maps = extract_heatmaps(output, {0}, 3);
    CHECK_THROWS_AS(emit_prompt_package("s4", series, outcome, maps, 0.05, dir / "s4"),
                    std::invalid_argument);
  }
}

TEST_CASE("schema validator catches malformed manifests") {
  const auto schema = nlohmann::json::parse(testutil::read_text_file(
      std::string(CONMIL_SOURCE_DIR) + "/schemas/prompt_package.schema.json"));
  nlohmann::json bad = {{"sample_id", "x"}, {"alpha", 0.05}, {"set", nlohmann::json::array()},
                        {"series_svg", "x.svg"}};
  CHECK(!jsonschema::validate(bad, schema).empty());  // stratum missing
  bad["stratum"] = "Sure";
  CHECK(!jsonschema::validate(bad, schema).empty());  // not in enum
  bad["stratum"] = "Confident";
  CHECK(jsonschema::validate(bad, schema).empty());
}

TEST_CASE("trained attention localizes motifs on the synthetic task") {
  conmil::data::SyntheticSpec spec;
  spec.num_classes = 3;
  spec.length = 64;
  spec.motif_length = 12;
  spec.amplitude = 1.3;
  spec.noise_sigma = 0.7;
  spec.motifs_max = 2;
  spec.seed = 12;
  const auto bags = conmil::data::generate_bags(spec, 160);
  std::vector<Bag> train_set, val_set;
  for (std::size_t i = 0; i < bags.size(); ++i)
    (i % 4 == 3 ? val_set : train_set).push_back(bags[i]);
  spec.seed = 512;
  const auto test_set = conmil::data::generate_bags(spec, 50);

  mil::ModelConfig mc;
  mc.num_classes = 3;
  mc.embed_dim = 16;
  mc.hidden_channels = 16;
  mc.input_channels = 1;
  mc.seed = 12;
  training::TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 32;
  tc.patience = 10;
  tc.seed = 12;
  const auto model = training::train(train_set, val_set, mc, tc).model;

  std::size_t correct = 0, argmax_in_span = 0;
  double auroc_sum = 0.0, null_sum = 0.0;
  std::mt19937_64 g(42);
  for (const Bag& bag : test_set) {
    const auto out = model.forward_bag(bag.series);
    std::size_t pred = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (out.logits.at(0, k) > out.logits.at(0, pred)) pred = k;
    if (pred != bag.label) continue;
    ++correct;

    std::vector<double> weights(bag.length()), labels(bag.length());
    for (std::size_t t = 0; t < bag.length(); ++t) {
      weights[t] = out.attention.at(bag.label, t);
      labels[t] = bag.instance_labels.at(t, bag.label);
    }
    const std::size_t argmax =
        std::distance(weights.begin(), std::max_element(weights.begin(), weights.end()));
    if (labels[argmax] > 0.5) ++argmax_in_span;

    auroc_sum += *saliency_auroc(weights, labels);
    auto order = rng::shuffled_indices(labels.size(), g);
    std::vector<double> permuted(labels.size());
    for (std::size_t t = 0; t < labels.size(); ++t) permuted[t] = labels[order[t]];
    null_sum += *saliency_auroc(weights, permuted);
  }
  REQUIRE(correct >= 10);
  CHECK(static_cast<double>(argmax_in_span) / static_cast<double>(correct) >= 0.7);
  CHECK(auroc_sum / static_cast<double>(correct) >=
        null_sum / static_cast<double>(correct) + 0.15);
}
