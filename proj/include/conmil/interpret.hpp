#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conmil/decision.hpp"
#include "conmil/model.hpp"

namespace conmil {
namespace interpret {

struct ClassHeatmap {
  std::size_t class_index = 0;
  std::vector<double> weights;  // length T
  std::string normalization = "raw";
  // True when the pooling provides a single global map that was copied
  // for this class (trans / conjunctive).
  bool replicated_from_global = false;
};

// One heatmap per requested class, taken verbatim from the attention map
// the pooling actually used.
std::vector<ClassHeatmap> extract_heatmaps(const mil::PoolingOutput& output,
                                           const std::vector<std::size_t>& classes,
                                           std::size_t num_classes);

// Maps the observed range onto [0,1]; a constant map becomes all zeros.
ClassHeatmap minmax_normalize(const ClassHeatmap& map);

// Rank-based AUROC of the weights against binary instance labels.
// Undefined (absent) when the labels are all-positive or all-negative.
std::optional<double> saliency_auroc(const std::vector<double>& weights,
                                     const std::vector<double>& labels);

struct RenderOptions {
  std::size_t width = 1024;
  std::size_t channel_height = 256;
};

// Deterministic SVG: one polyline per channel, optional per-timestep
// background rectangles whose opacity is the minmax-normalized weight.
std::string render(const NdArray& series, const ClassHeatmap* heatmap = nullptr,
                   const RenderOptions& options = {});

struct PromptPackage {
  std::string sample_id;
  double alpha = 0.0;
  std::string stratum;
  struct Member {
    std::size_t class_index;
    std::string heatmap_svg;
    std::string weights_csv;
  };
  std::vector<Member> set;
  std::string series_svg;
};

// Writes per-class heatmap SVGs and weight CSVs plus package.json into
// out_dir. Reject outcomes emit a series-only package flagged for review.
PromptPackage emit_prompt_package(const std::string& sample_id, const NdArray& series,
                                  const decision::DecisionOutcome& outcome,
                                  const std::vector<ClassHeatmap>& heatmaps, double alpha,
                                  const std::filesystem::path& out_dir);

std::string package_to_json(const PromptPackage& package);

}  // namespace interpret
}  // namespace conmil
