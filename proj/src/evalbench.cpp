#include "conmil/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>
#include <json.hpp>

#include "conmil/data.hpp"
#include "conmil/rng.hpp"

namespace conmil {
namespace bench {

CoverageReport coverage_metrics(const std::vector<conformal::PredictionSet>& sets,
                                const std::vector<std::size_t>& truths, std::size_t num_classes,
                                double alpha) {
  if (sets.size() != truths.size() || sets.empty())
    throw std::invalid_argument("coverage_metrics: misaligned or empty inputs");
  CoverageReport r;
  r.alpha = alpha;
  r.n_test = sets.size();
  r.per_class_fnr.assign(num_classes, 0.0);
  r.per_class_n.assign(num_classes, 0);
  std::size_t covered = 0;
  double size_sum = 0.0;
  std::vector<std::size_t> misses(num_classes, 0);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const std::size_t y = truths[i];
    if (y >= num_classes) throw std::invalid_argument("coverage_metrics: label out of range");
    r.per_class_n[y] += 1;
    const bool hit = sets[i].contains(y);
    if (hit) ++covered;
    else ++misses[y];
    size_sum += static_cast<double>(sets[i].size());
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    r.per_class_fnr[k] = r.per_class_n[k] == 0
                             ? 0.0
                             : static_cast<double>(misses[k]) / static_cast<double>(r.per_class_n[k]);
  r.marginal_coverage = static_cast<double>(covered) / static_cast<double>(sets.size());
  r.avg_set_size = size_sum / static_cast<double>(sets.size());
  return r;
}

std::string coverage_report_json(const CoverageReport& report) {
  nlohmann::json j;
  j["alpha"] = report.alpha;
  j["n_test"] = report.n_test;
  j["per_class_fnr"] = report.per_class_fnr;
  j["per_class_n"] = report.per_class_n;
  j["marginal_coverage"] = report.marginal_coverage;
  j["avg_set_size"] = report.avg_set_size;
  return j.dump(2);
}

std::string coverage_report_csv(const CoverageReport& report) {
  std::string out = "row,value\n";
  char buf[96];
  for (std::size_t k = 0; k < report.per_class_fnr.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "per_class_fnr_%zu,%.6f\n", k, report.per_class_fnr[k]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "marginal_coverage,%.6f\n", report.marginal_coverage);
  out += buf;
  std::snprintf(buf, sizeof(buf), "avg_set_size,%.6f\n", report.avg_set_size);
  out += buf;
  return out;
}

std::vector<FractionTrialRow> calibration_fraction_study(
    const std::vector<conformal::ScoredSample>& cal,
    const std::vector<conformal::ScoredSample>& test, std::size_t num_classes, double alpha,
    const std::vector<double>& fractions, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("calibration_fraction_study: zero trials");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw std::invalid_argument("calibration_fraction_study: fractions must lie in (0,1]");

  std::vector<std::size_t> truths(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) truths[i] = test[i].label;

  std::mt19937_64 g(seed);
  std::vector<FractionTrialRow> rows;
  for (double fraction : fractions) {
    FractionTrialRow row;
    row.fraction = fraction;
    row.min_coverage = 1.0;
    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cal.size()))));
    // fraction 1.0 uses the full set; a single trial is exact.
    const std::size_t n_trials = take >= cal.size() ? 1 : trials;
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
      std::vector<conformal::ScoredSample> sub;
      if (take >= cal.size()) {
        sub = cal;
      } else {
        auto order = rng::shuffled_indices(cal.size(), g);
        sub.reserve(take);
        for (std::size_t i = 0; i < take; ++i) sub.push_back(cal[order[i]]);
      }
      const auto profile = conformal::calibrate_exact(sub, num_classes, alpha);
      if (!profile.infeasible_classes.empty()) row.any_infeasible_class = true;
      std::vector<conformal::PredictionSet> sets;
      sets.reserve(test.size());
      for (const auto& s : test) sets.push_back(conformal::build_set(s.p_hat, profile));
      const auto report = coverage_metrics(sets, truths, num_classes, alpha);
      row.mean_coverage += report.marginal_coverage;
      row.min_coverage = std::min(row.min_coverage, report.marginal_coverage);
      row.max_coverage = std::max(row.max_coverage, report.marginal_coverage);
      ++row.trials;
    }
    row.mean_coverage /= static_cast<double>(row.trials);
    rows.push_back(row);
  }
  return rows;
}

std::string fraction_study_json(const std::vector<FractionTrialRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows)
    arr.push_back({{"fraction", r.fraction},
                   {"mean_coverage", r.mean_coverage},
                   {"min_coverage", r.min_coverage},
                   {"max_coverage", r.max_coverage},
                   {"trials", r.trials},
                   {"any_infeasible_class", r.any_infeasible_class}});
  return arr.dump(2);
}

std::string fraction_study_csv(const std::vector<FractionTrialRow>& rows) {
  std::string out = "fraction,mean_coverage,min_coverage,max_coverage,trials\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.6f,%.6f,%.6f,%zu\n", r.fraction, r.mean_coverage,
                  r.min_coverage, r.max_coverage, r.trials);
    out += buf;
  }
  return out;
}

double knn_entropy(const std::vector<std::vector<double>>& points, std::size_t k) {
  const std::size_t n = points.size();
  if (n <= k) throw std::invalid_argument("knn_entropy: need more than k points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("knn_entropy: ragged points");

  double log_dist_sum = 0.0;
  std::vector<double> dists(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = points[i][c] - points[j][c];
        d2 += diff * diff;
      }
      dists[m++] = d2;
    }
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     dists.begin() + static_cast<std::ptrdiff_t>(m));
    // Duplicated points make the k-NN distance zero; clamp to keep the
    // estimate finite.
    const double dist = std::sqrt(std::max(dists[k - 1], 1e-300));
    log_dist_sum += std::log(dist);
  }
  const double d = static_cast<double>(dim);
  const double log_unit_ball = d / 2.0 * std::log(M_PI) - std::lgamma(d / 2.0 + 1.0);
  return boost::math::digamma(static_cast<double>(n)) -
         boost::math::digamma(static_cast<double>(k)) + log_unit_ball +
         d * log_dist_sum / static_cast<double>(n);
}

namespace {

std::vector<double> pooled_embedding(const mil::MilModel& model, const Bag& bag) {
  const mil::PoolingOutput out = model.forward_bag(bag.series);
  std::vector<double> e(out.pooled.cols());
  const std::size_t row =
      model.config().pooling == mil::PoolingKind::QTrans ? bag.label : 0;
  for (std::size_t c = 0; c < out.pooled.cols(); ++c) e[c] = out.pooled.at(row, c);
  return e;
}

double class_weighted_entropy(const mil::MilModel& model, const std::vector<Bag>& bags,
                              std::size_t knn_k, std::vector<std::size_t>& skipped) {
  const std::size_t num_classes = model.config().num_classes;
  std::vector<std::vector<std::vector<double>>> by_class(num_classes);
  for (const Bag& bag : bags) by_class[bag.label].push_back(pooled_embedding(model, bag));
  double weighted = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (by_class[k].size() < knn_k + 1) {
      if (std::find(skipped.begin(), skipped.end(), k) == skipped.end()) skipped.push_back(k);
      continue;
    }
    weighted += static_cast<double>(by_class[k].size()) * knn_entropy(by_class[k], knn_k);
    used += by_class[k].size();
  }
  if (used == 0) throw std::invalid_argument("entropy_compare: every class was skipped");
  return weighted / static_cast<double>(used);
}

}  // namespace

EntropyComparison entropy_compare(const mil::MilModel& qtrans_model,
                                  const mil::MilModel& trans_model, const std::vector<Bag>& bags,
                                  std::size_t knn_k) {
  EntropyComparison cmp;
  cmp.h_qtrans = class_weighted_entropy(qtrans_model, bags, knn_k, cmp.skipped_classes);
  cmp.h_trans = class_weighted_entropy(trans_model, bags, knn_k, cmp.skipped_classes);
  return cmp;
}

std::string entropy_report_json(const EntropyComparison& cmp) {
  nlohmann::json j;
  j["h_qtrans"] = cmp.h_qtrans;
  j["h_trans"] = cmp.h_trans;
  j["skipped_classes"] = cmp.skipped_classes;
  return j.dump(2);
}

std::string entropy_report_csv(const EntropyComparison& cmp) {
  char buf[96];
  std::string out = "arm,entropy\n";
  std::snprintf(buf, sizeof(buf), "qtrans,%.6f\ntrans,%.6f\n", cmp.h_qtrans, cmp.h_trans);
  out += buf;
  return out;
}

namespace {

double timer_tick_seconds() {
  using clock = std::chrono::steady_clock;
  double best = 1.0;
  for (int i = 0; i < 16; ++i) {
    const auto a = clock::now();
    auto b = clock::now();
    while (b == a) b = clock::now();
    best = std::min(best, std::chrono::duration<double>(b - a).count());
  }
  return best;
}

}  // namespace

TimingReport timing_scaling(mil::PoolingKind kind, const std::vector<std::size_t>& t_values,
                            std::size_t num_classes, std::size_t embed_dim, std::size_t repeats,
                            std::size_t batch) {
  if (t_values.size() < 2) throw std::invalid_argument("timing_scaling: need >= 2 T values");
  if (repeats == 0 || batch == 0) throw std::invalid_argument("timing_scaling: zero repeats");

  mil::ModelConfig cfg;
  cfg.num_classes = num_classes;
  cfg.embed_dim = embed_dim;
  cfg.pooling = kind;
  cfg.seed = 7;
  const mil::MilModel model(cfg);

  const double tick = timer_tick_seconds();
  TimingReport report;
  report.t_values = t_values;
  std::mt19937_64 g(7);
  double sink = 0.0;
  for (std::size_t t_len : t_values) {
    std::vector<NdArray> zs;
    for (std::size_t b = 0; b < batch; ++b) {
      NdArray z({t_len, embed_dim});
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng::normal(g);
      zs.push_back(std::move(z));
    }
    std::vector<double> times;
    for (std::size_t rep = 0; rep < repeats; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      for (const NdArray& z : zs) sink += model.pool(z).logits.at(0, 0);
      const auto stop = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(stop - start).count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    if (median < 50.0 * tick)
      throw std::runtime_error(
          "timing_scaling: timer resolution too coarse at T=" + std::to_string(t_len) +
          "; use larger T values");
    report.median_seconds.push_back(median);
  }
  (void)sink;

  // Least squares on (log T, log time).
  const std::size_t n = t_values.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(static_cast<double>(t_values[i]));
    const double y = std::log(report.median_seconds[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  report.loglog_slope = (static_cast<double>(n) * sxy - sx * sy) /
                        (static_cast<double>(n) * sxx - sx * sx);
  return report;
}

std::string timing_report_json(const TimingReport& report) {
  nlohmann::json j;
  j["t_values"] = report.t_values;
  j["median_seconds"] = report.median_seconds;
  j["loglog_slope"] = report.loglog_slope;
  return j.dump(2);
}

std::string timing_report_csv(const TimingReport& report) {
  std::string out = "t,median_seconds\n";
  char buf[64];
  for (std::size_t i = 0; i < report.t_values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", report.t_values[i],
                  report.median_seconds[i]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "slope,%.6f\n", report.loglog_slope);
  out += buf;
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two aligned vectors of length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

ShiftStudyResult shift_study(const mil::MilModel& model, const ShiftStudyConfig& cfg) {
  const std::size_t num_classes = cfg.generator.num_classes;
  ShiftStudyResult result;
  result.rows.resize(cfg.noise_magnitudes.size());
  for (std::size_t m = 0; m < cfg.noise_magnitudes.size(); ++m)
    result.rows[m].magnitude = cfg.noise_magnitudes[m];

  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    data::SyntheticSpec spec;
    spec.num_classes = cfg.generator.num_classes;
    spec.length = cfg.generator.length;
    spec.channels = cfg.generator.channels;
    spec.motif_length = cfg.generator.motif_length;
    spec.amplitude = cfg.generator.amplitude;
    spec.noise_sigma = cfg.generator.noise_sigma;
    spec.seed = cfg.base_seed + 1000 + s;
    const std::size_t per_class = (cfg.n_cal + cfg.n_test) / num_classes;
    auto bags = data::generate_bags(spec, per_class);

    std::mt19937_64 g(cfg.base_seed + s);
    auto order = rng::shuffled_indices(bags.size(), g);
    std::vector<conformal::ScoredSample> cal;
    std::vector<const Bag*> test_bags;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Bag& bag = bags[order[i]];
      if (i < cfg.n_cal) {
        cal.push_back({model.predict_proba(bag), bag.label});
      } else if (test_bags.size() < cfg.n_test) {
        test_bags.push_back(&bag);
      }
    }
    const auto profile = conformal::calibrate_exact(cal, num_classes, cfg.alpha);

    for (std::size_t m = 0; m < cfg.noise_magnitudes.size(); ++m) {
      const double mag = cfg.noise_magnitudes[m];
      std::size_t covered = 0;
      std::mt19937_64 noise_rng(cfg.base_seed + 7777 + s * 131 + m);
      for (const Bag* bag : test_bags) {
        Bag shifted = *bag;
        if (mag > 0.0)
          for (std::size_t i = 0; i < shifted.series.size(); ++i)
            shifted.series[i] += rng::normal(noise_rng, 0.0, mag);
        const auto set = conformal::build_set(model.predict_proba(shifted), profile);
        if (set.contains(bag->label)) ++covered;
      }
      const double risk = 1.0 - static_cast<double>(covered) / static_cast<double>(test_bags.size());
      result.rows[m].mean_gap += (risk - cfg.alpha) / static_cast<double>(cfg.seeds);
    }
  }

  std::vector<double> mags, gaps;
  for (const auto& row : result.rows) {
    mags.push_back(row.magnitude);
    gaps.push_back(row.mean_gap);
  }
  result.spearman_rho = spearman(mags, gaps);
  return result;
}

std::string shift_study_json(const ShiftStudyResult& result) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows)
    rows.push_back({{"magnitude", r.magnitude}, {"mean_gap", r.mean_gap}});
  j["rows"] = rows;
  j["spearman_rho"] = result.spearman_rho;
  return j.dump(2);
}

std::string shift_study_csv(const ShiftStudyResult& result) {
  std::string out = "magnitude,mean_gap\n";
  char buf[64];
  for (const auto& r : result.rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f\n", r.magnitude, r.mean_gap);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "spearman_rho,%.6f\n", result.spearman_rho);
  out += buf;
  return out;
}

}  // namespace bench
}  // namespace conmil
