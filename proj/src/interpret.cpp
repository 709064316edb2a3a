#include "conmil/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace conmil {
namespace interpret {

std::vector<ClassHeatmap> extract_heatmaps(const mil::PoolingOutput& output,
                                           const std::vector<std::size_t>& classes,
                                           std::size_t num_classes) {
  const NdArray& attn = output.attention;
  const bool per_class = attn.rows() == num_classes && num_classes > 1;
  std::vector<ClassHeatmap> out;
  out.reserve(classes.size());
  for (std::size_t k : classes) {
    if (k >= num_classes)
      throw std::invalid_argument("extract_heatmaps: class " + std::to_string(k) +
                                  " out of range for K=" + std::to_string(num_classes));
    ClassHeatmap map;
    map.class_index = k;
    map.replicated_from_global = !per_class;
    const std::size_t row = per_class ? k : 0;
    map.weights.resize(attn.cols());
    for (std::size_t t = 0; t < attn.cols(); ++t) map.weights[t] = attn.at(row, t);
    out.push_back(std::move(map));
  }
  return out;
}

ClassHeatmap minmax_normalize(const ClassHeatmap& map) {
  ClassHeatmap out = map;
  out.normalization = "minmax";
  if (map.weights.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(map.weights.begin(), map.weights.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo <= 0.0) {
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    return out;
  }
  for (double& w : out.weights) w = (w - lo) / (hi - lo);
  return out;
}

std::optional<double> saliency_auroc(const std::vector<double>& weights,
                                     const std::vector<double>& labels) {
  if (weights.size() != labels.size())
    throw std::invalid_argument("saliency_auroc: misaligned inputs");
  std::size_t n_pos = 0;
  for (double l : labels)
    if (l > 0.5) ++n_pos;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Mann-Whitney with average ranks for ties.
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return weights[a] < weights[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && weights[order[j + 1]] == weights[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m)
      if (labels[order[m]] > 0.5) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string render(const NdArray& series, const ClassHeatmap* heatmap,
                   const RenderOptions& options) {
  const std::size_t t_len = series.rows();
  const std::size_t channels = series.cols();
  if (t_len == 0) throw std::invalid_argument("render: empty series");
  if (!series.all_finite()) throw std::invalid_argument("render: non-finite series");
  if (heatmap && heatmap->weights.size() != t_len)
    throw std::invalid_argument("render: heatmap length does not match series");

  const double w = static_cast<double>(options.width);
  const double h = static_cast<double>(options.channel_height);
  const double total_h = h * static_cast<double>(channels);
  const double step = t_len > 1 ? w / static_cast<double>(t_len - 1) : w;
  const double cell = w / static_cast<double>(t_len);

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(options.width) +
         "\" height=\"" + std::to_string(static_cast<std::size_t>(total_h)) + "\" viewBox=\"0 0 " +
         std::to_string(options.width) + " " + std::to_string(static_cast<std::size_t>(total_h)) +
         "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  ClassHeatmap norm;
  if (heatmap) norm = heatmap->normalization == "minmax" ? *heatmap : minmax_normalize(*heatmap);
  if (heatmap) {
    for (std::size_t t = 0; t < t_len; ++t) {
      svg += "<rect x=\"" + fmt(static_cast<double>(t) * cell) + "\" y=\"0\" width=\"" +
             fmt(cell) + "\" height=\"" + fmt(total_h) + "\" fill=\"#d62728\" fill-opacity=\"" +
             fmt(norm.weights[t]) + "\"/>\n";
    }
  }

  for (std::size_t c = 0; c < channels; ++c) {
    double lo = series.at(0, c), hi = series.at(0, c);
    for (std::size_t t = 0; t < t_len; ++t) {
      lo = std::min(lo, series.at(t, c));
      hi = std::max(hi, series.at(t, c));
    }
    const double span = hi - lo > 0.0 ? hi - lo : 1.0;
    const double top = h * static_cast<double>(c);
    svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < t_len; ++t) {
      const double x = static_cast<double>(t) * step;
      const double y = top + h - h * 0.9 * ((series.at(t, c) - lo) / span) - h * 0.05;
      if (t) svg += " ";
      svg += fmt(x) + "," + fmt(y);
    }
    svg += "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string package_to_json(const PromptPackage& package) {
  nlohmann::json j;
  j["sample_id"] = package.sample_id;
  j["alpha"] = package.alpha;
  j["stratum"] = package.stratum;
  nlohmann::json set = nlohmann::json::array();
  for (const auto& m : package.set)
    set.push_back({{"class", m.class_index},
                   {"heatmap_svg", m.heatmap_svg},
                   {"weights_csv", m.weights_csv}});
  j["set"] = set;
  j["series_svg"] = package.series_svg;
  return j.dump(2);
}

PromptPackage emit_prompt_package(const std::string& sample_id, const NdArray& series,
                                  const decision::DecisionOutcome& outcome,
                                  const std::vector<ClassHeatmap>& heatmaps, double alpha,
                                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw std::runtime_error("cannot create package directory: " + out_dir.string());

  auto write_file = [&](const std::string& name, const std::string& content) {
    std::ofstream os(out_dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + (out_dir / name).string());
    os << content;
  };

  PromptPackage package;
  package.sample_id = sample_id;
  package.alpha = alpha;
  package.stratum = decision::to_string(outcome.stratum);
  package.series_svg = sample_id + "_series.svg";
  write_file(package.series_svg, render(series));

  if (outcome.stratum != decision::Stratum::Reject) {
    for (std::size_t k : outcome.set.members) {
      auto it = std::find_if(heatmaps.begin(), heatmaps.end(),
                             [k](const ClassHeatmap& m) { return m.class_index == k; });
      if (it == heatmaps.end())
        throw std::invalid_argument("emit_prompt_package: missing heatmap for class " +
                                    std::to_string(k));
      PromptPackage::Member member;
      member.class_index = k;
      member.heatmap_svg = sample_id + "_class" + std::to_string(k) + ".svg";
      member.weights_csv = sample_id + "_class" + std::to_string(k) + ".csv";
      write_file(member.heatmap_svg, render(series, &*it));
      std::string csv = "t,weight\n";
      char buf[48];
      for (std::size_t t = 0; t < it->weights.size(); ++t) {
        std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", t, it->weights[t]);
        csv += buf;
      }
      write_file(member.weights_csv, csv);
      package.set.push_back(std::move(member));
    }
  }
  write_file("package.json", package_to_json(package) + "\n");
  return package;
}

}  // namespace interpret
}  // namespace conmil
