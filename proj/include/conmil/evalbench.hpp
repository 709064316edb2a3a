#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conmil/bag.hpp"
#include "conmil/conformal.hpp"
#include "conmil/model.hpp"

namespace conmil {
namespace bench {

struct CoverageReport {
  std::vector<double> per_class_fnr;
  std::vector<std::size_t> per_class_n;
  double marginal_coverage = 0.0;
  double avg_set_size = 0.0;
  double alpha = 0.0;
  std::size_t n_test = 0;
};

CoverageReport coverage_metrics(const std::vector<conformal::PredictionSet>& sets,
                                const std::vector<std::size_t>& truths, std::size_t num_classes,
                                double alpha);

std::string coverage_report_json(const CoverageReport& report);
// Row layout: one per-class FNR row per class, then marginal coverage and
// average set size.
std::string coverage_report_csv(const CoverageReport& report);

struct FractionTrialRow {
  double fraction = 0.0;
  double mean_coverage = 0.0;
  double min_coverage = 0.0;
  double max_coverage = 0.0;
  std::size_t trials = 0;
  bool any_infeasible_class = false;
};

// Recalibrates on fresh random sub-fractions of the calibration scores
// and evaluates marginal coverage on the fixed test scores.
std::vector<FractionTrialRow> calibration_fraction_study(
    const std::vector<conformal::ScoredSample>& cal,
    const std::vector<conformal::ScoredSample>& test, std::size_t num_classes, double alpha,
    const std::vector<double>& fractions, std::size_t trials, std::uint64_t seed);

std::string fraction_study_json(const std::vector<FractionTrialRow>& rows);
std::string fraction_study_csv(const std::vector<FractionTrialRow>& rows);

// Kozachenko-Leonenko k-NN differential entropy of a point cloud (rows =
// samples). Needs more than k points.
double knn_entropy(const std::vector<std::vector<double>>& points, std::size_t k = 3);

struct EntropyComparison {
  double h_qtrans = 0.0;
  double h_trans = 0.0;
  std::vector<std::size_t> skipped_classes;  // fewer than k+1 samples
};

// Class-conditioned entropy of the pooled embeddings of both models over
// the same bags, averaged over classes weighted by class frequency. The
// qtrans arm conditions on the bag's own class token row.
EntropyComparison entropy_compare(const mil::MilModel& qtrans_model,
                                  const mil::MilModel& trans_model, const std::vector<Bag>& bags,
                                  std::size_t knn_k = 3);

std::string entropy_report_json(const EntropyComparison& cmp);
std::string entropy_report_csv(const EntropyComparison& cmp);

struct TimingReport {
  std::vector<std::size_t> t_values;
  std::vector<double> median_seconds;
  double loglog_slope = 0.0;
};

// Median forward wall time of the pooling mechanism per T (batch of
// `batch` bags per measurement), with a least-squares slope in log-log
// space. Errors when the fastest measurement is within 50 timer ticks.
TimingReport timing_scaling(mil::PoolingKind kind, const std::vector<std::size_t>& t_values,
                            std::size_t num_classes, std::size_t embed_dim, std::size_t repeats,
                            std::size_t batch = 8);

std::string timing_report_json(const TimingReport& report);
std::string timing_report_csv(const TimingReport& report);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct ShiftStudyConfig {
  std::size_t n_cal = 200;
  std::size_t n_test = 200;
  double alpha = 0.05;
  std::vector<double> noise_magnitudes = {0.0, 0.25, 0.5, 1.0};
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  // Generator used for the fresh draws; must match the training data.
  struct GeneratorRef {
    std::size_t num_classes = 3;
    std::size_t length = 64;
    std::size_t channels = 1;
    std::size_t motif_length = 16;
    double amplitude = 2.0;
    double noise_sigma = 0.5;
  } generator;
};

struct ShiftStudyRow {
  double magnitude = 0.0;
  double mean_gap = 0.0;  // realized risk minus alpha, averaged over seeds
};

struct ShiftStudyResult {
  std::vector<ShiftStudyRow> rows;
  double spearman_rho = 0.0;
};

// Per seed: scores fresh calibration/test bags with the model, calibrates
// on the clean calibration scores and measures the signed coverage gap on
// noise-shifted test bags at each magnitude.
ShiftStudyResult shift_study(const mil::MilModel& model, const ShiftStudyConfig& cfg);

std::string shift_study_json(const ShiftStudyResult& result);
std::string shift_study_csv(const ShiftStudyResult& result);

}  // namespace bench
}  // namespace conmil
