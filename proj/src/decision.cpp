#include "conmil/decision.hpp"

#include <cstdio>
#include <stdexcept>

#include <json.hpp>

#include "conmil/rng.hpp"

namespace conmil {
namespace decision {

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::Confident: return "Confident";
    case Stratum::Uncertain: return "Uncertain";
    case Stratum::Reject: return "Reject";
  }
  return "Reject";
}

Stratum stratum_from_string(const std::string& s) {
  if (s == "Confident") return Stratum::Confident;
  if (s == "Uncertain") return Stratum::Uncertain;
  if (s == "Reject") return Stratum::Reject;
  throw std::invalid_argument("unknown stratum: " + s);
}

DecisionOutcome stratify(const conformal::PredictionSet& set, std::size_t num_classes) {
  DecisionOutcome out;
  out.set = set;
  if (set.size() == 1) {
    out.stratum = Stratum::Confident;
    out.chosen = set.members[0];
  } else if (set.size() > 1 && set.size() < num_classes) {
    out.stratum = Stratum::Uncertain;
  } else {
    // Full label set carries no information; the empty set is treated the
    // same way and escalated.
    out.stratum = Stratum::Reject;
  }
  return out;
}

void AgentSpec::validate() const {
  if (skill_q < 0.0 || skill_q > 1.0)
    throw std::invalid_argument("AgentSpec: skill q must lie in [0,1]");
}

std::size_t simulate_agent(const DecisionOutcome& outcome, std::size_t truth,
                           const AgentSpec& agent, std::mt19937_64& rng_state) {
  agent.validate();
  if (outcome.stratum != Stratum::Uncertain)
    throw std::logic_error("simulate_agent: outcome is not Uncertain");
  const auto& members = outcome.set.members;
  const bool truth_in_set = outcome.set.contains(truth);
  const double q = agent.kind == AgentSpec::Kind::Oracle   ? 1.0
                   : agent.kind == AgentSpec::Kind::Uniform ? 0.0
                                                            : agent.skill_q;
  if (truth_in_set && agent.kind != AgentSpec::Kind::Uniform) {
    if (q >= 1.0 || rng::uniform01(rng_state) < q) return truth;
  }
  return members[rng::uniform_index(rng_state, members.size())];
}

StratifiedReport stratified_report(const std::vector<DecisionOutcome>& outcomes,
                                   const std::vector<std::size_t>& truths) {
  if (outcomes.size() != truths.size())
    throw std::invalid_argument("stratified_report: misaligned inputs");
  StratifiedReport r;
  r.total = outcomes.size();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const DecisionOutcome& o = outcomes[i];
    const bool correct = o.chosen.has_value() && *o.chosen == truths[i];
    switch (o.stratum) {
      case Stratum::Confident:
        ++r.confident.count;
        if (correct) ++r.confident.correct;
        break;
      case Stratum::Uncertain:
        ++r.uncertain.count;
        if (correct) ++r.uncertain.correct;
        break;
      case Stratum::Reject:
        ++r.reject.count;
        break;
    }
  }
  auto fill_acc = [](StratumStats& s) {
    if (s.count > 0) s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.count);
  };
  fill_acc(r.confident);
  fill_acc(r.uncertain);
  return r;
}

std::string report_to_json(const StratifiedReport& report) {
  auto stats = [](const StratumStats& s, bool with_accuracy) {
    nlohmann::json j;
    j["n"] = s.count;
    if (with_accuracy) {
      j["correct"] = s.correct;
      if (s.accuracy) j["accuracy"] = *s.accuracy;
    }
    return j;
  };
  nlohmann::json j;
  j["confident"] = stats(report.confident, true);
  j["uncertain"] = stats(report.uncertain, true);
  j["reject"] = stats(report.reject, false);
  j["total"] = report.total;
  return j.dump(2);
}

std::string report_to_table(const StratifiedReport& report) {
  char line[96];
  std::string out;
  out += "stratum        n  accuracy\n";
  auto row = [&](const char* name, const StratumStats& s, bool with_accuracy) {
    if (with_accuracy && s.accuracy)
      std::snprintf(line, sizeof(line), "%-10s %7zu  %7.2f%%\n", name, s.count,
                    100.0 * *s.accuracy);
    else
      std::snprintf(line, sizeof(line), "%-10s %7zu         -\n", name, s.count);
    out += line;
  };
  row("Confident", report.confident, true);
  row("Uncertain", report.uncertain, true);
  row("Reject", report.reject, false);
  std::snprintf(line, sizeof(line), "%-10s %7zu\n", "total", report.total);
  out += line;
  return out;
}

}  // namespace decision
}  // namespace conmil
