#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace conmil {
namespace conformal {

// Per-class score vector plus the true label, the unit of calibration.
struct ScoredSample {
  std::vector<double> p_hat;
  std::size_t label = 0;
};

struct CalibrationProfile {
  double alpha = 0.05;
  double risk_bound = 1.0;  // B in the threshold rule
  std::string method;       // "grid" or "order-statistic"
  std::vector<double> lambdas;
  std::vector<std::size_t> class_counts;
  std::vector<std::size_t> infeasible_classes;  // lambda forced to 1
  std::string data_fingerprint;                 // hex SHA-256 of the score matrix bytes
  std::string created_at;

  std::size_t num_classes() const { return lambdas.size(); }
};

struct PredictionSet {
  std::vector<std::size_t> members;
  std::vector<double> p_hat;
  std::string profile_fingerprint;  // ties the set to the profile that built it

  bool contains(std::size_t k) const;
  bool empty() const { return members.empty(); }
  std::size_t size() const { return members.size(); }
};

// Empirical per-class false-negative rate: the fraction of class-k
// samples whose p_hat[k] < 1 - lambda_k. Errors when no class-k samples
// exist (the class cannot be calibrated).
double fnr_risk(const std::vector<ScoredSample>& samples, std::size_t k, double lambda_k);

// Largest miss count per class that still satisfies the conformal risk
// inequality n/(n+1) * R + B/(n+1) <= alpha; negative means infeasible.
long long max_allowed_misses(std::size_t n_k, double alpha, double risk_bound);

std::vector<double> uniform_grid(double resolution);

// Per-class grids holding every candidate threshold 1 - p_hat[k] that
// occurs among that class's calibration samples, plus 0 and 1.
std::vector<std::vector<double>> observed_grids(const std::vector<ScoredSample>& samples,
                                                std::size_t num_classes);

// Smallest grid threshold per class satisfying the risk inequality,
// scanning the grid in ascending order; lambda_k = 1 (flagged) when no
// grid value is feasible.
CalibrationProfile calibrate_crc(const std::vector<ScoredSample>& samples, std::size_t num_classes,
                                 double alpha, double risk_bound,
                                 const std::vector<double>& grid);
CalibrationProfile calibrate_crc(const std::vector<ScoredSample>& samples, std::size_t num_classes,
                                 double alpha, double risk_bound,
                                 const std::vector<std::vector<double>>& per_class_grids);

// Order-statistic route: the threshold is the smallest observed
// nonconformity 1 - p_hat[k] that leaves at most max_allowed_misses
// class-k samples uncovered. Agrees with the grid route whenever the
// grid contains the observed values.
CalibrationProfile calibrate_exact(const std::vector<ScoredSample>& samples,
                                   std::size_t num_classes, double alpha,
                                   double risk_bound = 1.0);

// Membership rule p_hat[k] >= 1 - lambda_k, ties included.
PredictionSet build_set(const std::vector<double>& p_hat, const CalibrationProfile& profile);

std::string score_fingerprint(const std::vector<ScoredSample>& samples);

std::string profile_to_json(const CalibrationProfile& profile);
CalibrationProfile profile_from_json(const std::string& text);
void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path);
CalibrationProfile load_profile(const std::filesystem::path& path);

}  // namespace conformal
}  // namespace conmil
