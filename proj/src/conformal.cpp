#include "conmil/conformal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <openssl/evp.h>

namespace conmil {
namespace conformal {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1), got " + std::to_string(alpha));
}

void check_samples(const std::vector<ScoredSample>& samples, std::size_t num_classes) {
  for (const ScoredSample& s : samples) {
    if (s.p_hat.size() != num_classes)
      throw std::invalid_argument("score vector length does not match class count");
    if (s.label >= num_classes) throw std::invalid_argument("label out of range");
  }
}

std::size_t count_misses(const std::vector<double>& class_scores, double lambda) {
  std::size_t miss = 0;
  for (double p : class_scores)
    if (p < 1.0 - lambda) ++miss;
  return miss;
}

std::vector<std::vector<double>> scores_by_class(const std::vector<ScoredSample>& samples,
                                                 std::size_t num_classes) {
  std::vector<std::vector<double>> by_class(num_classes);
  for (const ScoredSample& s : samples) by_class[s.label].push_back(s.p_hat[s.label]);
  return by_class;
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

CalibrationProfile calibrate_on_grids(const std::vector<ScoredSample>& samples,
                                      std::size_t num_classes, double alpha, double risk_bound,
                                      const std::vector<std::vector<double>>& grids,
                                      const std::string& method) {
  check_alpha(alpha);
  check_samples(samples, num_classes);
  if (grids.size() != num_classes)
    throw std::invalid_argument("per-class grid count does not match class count");

  const auto by_class = scores_by_class(samples, num_classes);
  CalibrationProfile profile;
  profile.alpha = alpha;
  profile.risk_bound = risk_bound;
  profile.method = method;
  profile.lambdas.assign(num_classes, 1.0);
  profile.class_counts.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const std::size_t n_k = by_class[k].size();
    profile.class_counts[k] = n_k;
    if (n_k == 0) {
      profile.infeasible_classes.push_back(k);
      continue;
    }
    const long long allowed = max_allowed_misses(n_k, alpha, risk_bound);
    if (allowed < 0) {
      profile.infeasible_classes.push_back(k);
      continue;
    }
    bool found = false;
    for (double lambda : grids[k]) {
      if (count_misses(by_class[k], lambda) <= static_cast<std::size_t>(allowed)) {
        profile.lambdas[k] = std::clamp(lambda, 0.0, 1.0);
        found = true;
        break;
      }
    }
    if (!found) profile.infeasible_classes.push_back(k);  // lambda stays at 1
  }
  profile.data_fingerprint = score_fingerprint(samples);
  profile.created_at = iso8601_now();
  return profile;
}

}  // namespace

bool PredictionSet::contains(std::size_t k) const {
  return std::find(members.begin(), members.end(), k) != members.end();
}

double fnr_risk(const std::vector<ScoredSample>& samples, std::size_t k, double lambda_k) {
  std::size_t n_k = 0, miss = 0;
  for (const ScoredSample& s : samples) {
    if (s.label != k) continue;
    if (k >= s.p_hat.size()) throw std::invalid_argument("class index out of range");
    ++n_k;
    if (s.p_hat[k] < 1.0 - lambda_k) ++miss;
  }
  if (n_k == 0)
    throw std::invalid_argument("fnr_risk: no samples with true class " + std::to_string(k) +
                                "; class cannot be calibrated");
  return static_cast<double>(miss) / static_cast<double>(n_k);
}

long long max_allowed_misses(std::size_t n_k, double alpha, double risk_bound) {
  // n/(n+1) * miss/n + B/(n+1) <= alpha  <=>  miss <= alpha*(n+1) - B.
  const double bound = alpha * static_cast<double>(n_k + 1) - risk_bound;
  // The epsilon absorbs representation error when alpha*(n+1) lands on an
  // integer, e.g. alpha = 0.05 with n = 19.
  return static_cast<long long>(std::floor(bound + 1e-9));
}

std::vector<double> uniform_grid(double resolution) {
  if (!(resolution > 0.0 && resolution <= 1.0))
    throw std::invalid_argument("grid resolution must lie in (0,1]");
  std::vector<double> grid;
  const std::size_t steps = static_cast<std::size_t>(std::llround(1.0 / resolution));
  grid.reserve(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i)
    grid.push_back(std::min(1.0, static_cast<double>(i) * resolution));
  if (grid.back() != 1.0) grid.push_back(1.0);
  return grid;
}

std::vector<std::vector<double>> observed_grids(const std::vector<ScoredSample>& samples,
                                                std::size_t num_classes) {
  check_samples(samples, num_classes);
  auto by_class = scores_by_class(samples, num_classes);
  std::vector<std::vector<double>> grids(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::vector<double>& g = grids[k];
    g.push_back(0.0);
    for (double p : by_class[k]) g.push_back(std::clamp(1.0 - p, 0.0, 1.0));
    g.push_back(1.0);
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  return grids;
}

CalibrationProfile calibrate_crc(const std::vector<ScoredSample>& samples, std::size_t num_classes,
                                 double alpha, double risk_bound,
                                 const std::vector<double>& grid) {
  if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("grid must be non-empty and sorted ascending");
  std::vector<std::vector<double>> grids(num_classes, grid);
  return calibrate_on_grids(samples, num_classes, alpha, risk_bound, grids, "grid");
}

CalibrationProfile calibrate_crc(const std::vector<ScoredSample>& samples, std::size_t num_classes,
                                 double alpha, double risk_bound,
                                 const std::vector<std::vector<double>>& per_class_grids) {
  return calibrate_on_grids(samples, num_classes, alpha, risk_bound, per_class_grids, "grid");
}

CalibrationProfile calibrate_exact(const std::vector<ScoredSample>& samples,
                                   std::size_t num_classes, double alpha, double risk_bound) {
  check_alpha(alpha);
  check_samples(samples, num_classes);
  const auto by_class = scores_by_class(samples, num_classes);

  CalibrationProfile profile;
  profile.alpha = alpha;
  profile.risk_bound = risk_bound;
  profile.method = "order-statistic";
  profile.lambdas.assign(num_classes, 1.0);
  profile.class_counts.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const std::size_t n_k = by_class[k].size();
    profile.class_counts[k] = n_k;
    if (n_k == 0) {
      profile.infeasible_classes.push_back(k);
      continue;
    }
    const long long allowed = max_allowed_misses(n_k, alpha, risk_bound);
    if (allowed < 0) {
      profile.infeasible_classes.push_back(k);
      continue;
    }
    if (static_cast<std::size_t>(allowed) >= n_k) {
      profile.lambdas[k] = 0.0;
      continue;
    }
    // Nonconformity values ascending; the candidate threshold is the
    // (n_k - allowed)-th smallest, i.e. index n_k - allowed - 1.
    std::vector<double> s;
    s.reserve(n_k);
    for (double p : by_class[k]) s.push_back(std::clamp(1.0 - p, 0.0, 1.0));
    std::sort(s.begin(), s.end());
    std::size_t idx = n_k - static_cast<std::size_t>(allowed) - 1;
    // The membership rule compares p_hat against 1 - lambda, so a rounded
    // 1 - p_hat can land one candidate short; advance until the count holds.
    while (idx < n_k &&
           count_misses(by_class[k], s[idx]) > static_cast<std::size_t>(allowed))
      ++idx;
    if (idx >= n_k) {
      profile.infeasible_classes.push_back(k);
      continue;
    }
    profile.lambdas[k] = s[idx];
  }
  profile.data_fingerprint = score_fingerprint(samples);
  profile.created_at = iso8601_now();
  return profile;
}

PredictionSet build_set(const std::vector<double>& p_hat, const CalibrationProfile& profile) {
  if (p_hat.size() != profile.lambdas.size())
    throw std::invalid_argument("build_set: score length " + std::to_string(p_hat.size()) +
                                " does not match profile with K=" +
                                std::to_string(profile.lambdas.size()));
  PredictionSet set;
  set.p_hat = p_hat;
  set.profile_fingerprint = profile.data_fingerprint;
  for (std::size_t k = 0; k < p_hat.size(); ++k)
    if (p_hat[k] >= 1.0 - profile.lambdas[k]) set.members.push_back(k);
  return set;
}

std::string score_fingerprint(const std::vector<ScoredSample>& samples) {
  // Rows are serialized (label + scores) and sorted before hashing, so the
  // fingerprint identifies the calibration multiset rather than its order.
  std::vector<std::string> rows;
  rows.reserve(samples.size());
  for (const ScoredSample& s : samples) {
    std::string row(sizeof(std::uint64_t) + s.p_hat.size() * sizeof(double), '\0');
    const std::uint64_t label = s.label;
    std::memcpy(row.data(), &label, sizeof(label));
    std::memcpy(row.data() + sizeof(label), s.p_hat.data(), s.p_hat.size() * sizeof(double));
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const std::string& row : rows) EVP_DigestUpdate(ctx, row.data(), row.size());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string profile_to_json(const CalibrationProfile& profile) {
  nlohmann::json j;
  j["alpha"] = profile.alpha;
  j["B"] = profile.risk_bound;
  j["method"] = profile.method;
  j["lambdas"] = profile.lambdas;
  j["class_counts"] = profile.class_counts;
  j["infeasible_classes"] = profile.infeasible_classes;
  j["data_fingerprint"] = profile.data_fingerprint;
  j["created_at"] = profile.created_at;
  return j.dump(2);
}

CalibrationProfile profile_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  CalibrationProfile p;
  p.alpha = j.at("alpha").get<double>();
  p.risk_bound = j.at("B").get<double>();
  p.method = j.at("method").get<std::string>();
  p.lambdas = j.at("lambdas").get<std::vector<double>>();
  p.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
  if (j.contains("infeasible_classes"))
    p.infeasible_classes = j.at("infeasible_classes").get<std::vector<std::size_t>>();
  p.data_fingerprint = j.at("data_fingerprint").get<std::string>();
  p.created_at = j.at("created_at").get<std::string>();
  return p;
}

void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << profile_to_json(profile) << "\n";
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return profile_from_json(text);
}

}  // namespace conformal
}  // namespace conmil
