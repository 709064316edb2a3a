#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conmil/conformal.hpp"

namespace conmil {
namespace decision {

enum class Stratum { Confident, Uncertain, Reject };

std::string to_string(Stratum s);
Stratum stratum_from_string(const std::string& s);

struct DecisionOutcome {
  Stratum stratum = Stratum::Reject;
  conformal::PredictionSet set;
  std::optional<std::size_t> chosen;  // singleton class or the agent's pick
};

// Singleton -> Confident; strictly between 1 and K -> Uncertain; the full
// label set or the empty set -> Reject.
DecisionOutcome stratify(const conformal::PredictionSet& set, std::size_t num_classes);

struct AgentSpec {
  enum class Kind { Oracle, Uniform, Skill } kind = Kind::Oracle;
  double skill_q = 1.0;  // probability of picking the truth when it is in the set

  void validate() const;
};

// Simulated downstream choice inside an Uncertain prediction set. The
// oracle picks the truth whenever it is present; the skill agent does so
// with probability q and otherwise draws uniformly over the set; the
// uniform agent ignores the truth entirely.
std::size_t simulate_agent(const DecisionOutcome& outcome, std::size_t truth,
                           const AgentSpec& agent, std::mt19937_64& rng);

struct StratumStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  // Accuracy is undefined for Reject (no choice is made there).
  std::optional<double> accuracy;
};

struct StratifiedReport {
  StratumStats confident;
  StratumStats uncertain;
  StratumStats reject;
  std::size_t total = 0;
};

// Counts and accuracy per stratum. Outcomes must carry a chosen class for
// Confident and Uncertain rows (stratify fills singletons; run the agent
// for Uncertain ones first).
StratifiedReport stratified_report(const std::vector<DecisionOutcome>& outcomes,
                                   const std::vector<std::size_t>& truths);

std::string report_to_json(const StratifiedReport& report);
// Aligned-column text table: one row per stratum plus a total row.
std::string report_to_table(const StratifiedReport& report);

}  // namespace decision
}  // namespace conmil
