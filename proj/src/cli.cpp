#include "conmil/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "conmil/checkpoint.hpp"
#include "conmil/conformal.hpp"
#include "conmil/data.hpp"
#include "conmil/decision.hpp"
#include "conmil/evalbench.hpp"
#include "conmil/interpret.hpp"
#include "conmil/model.hpp"
#include "conmil/train.hpp"

namespace conmil {
namespace cli {

namespace {

struct ExitWith {
  int code;
  std::string message;
};

mil::MilModel load_model_or_exit3(const std::string& path) {
  try {
    return mil::load_checkpoint(path);
  } catch (const mil::CheckpointError& e) {
    throw ExitWith{3, e.what()};
  }
}

void check_compatible(const mil::MilModel& model, const data::DatasetArchive& archive) {
  if (model.config().num_classes != archive.num_classes)
    throw ExitWith{3, "model has K=" + std::to_string(model.config().num_classes) +
                          " but archive has K=" + std::to_string(archive.num_classes)};
  if (model.config().input_channels != archive.channels)
    throw ExitWith{3, "model expects " + std::to_string(model.config().input_channels) +
                          " channels but archive has " + std::to_string(archive.channels)};
}

void check_profile(const conformal::CalibrationProfile& profile, std::size_t num_classes) {
  if (profile.num_classes() != num_classes)
    throw ExitWith{3, "calibration profile has K=" + std::to_string(profile.num_classes()) +
                          " but model has K=" + std::to_string(num_classes)};
}

struct ScoredSplit {
  std::vector<std::string> ids;
  std::vector<conformal::ScoredSample> samples;
  std::vector<Bag> bags;
};

ScoredSplit score_split(const mil::MilModel& model, const data::DatasetArchive& archive,
                        const std::string& split, bool keep_bags) {
  ScoredSplit out;
  auto entries = archive.split_entries(split);
  std::sort(entries.begin(), entries.end(),
            [](const data::SampleEntry* a, const data::SampleEntry* b) { return a->id < b->id; });
  if (entries.empty()) throw ExitWith{2, "archive has no samples in split '" + split + "'"};
  for (const data::SampleEntry* e : entries) {
    Bag bag = data::load_sample(archive, *e, true);
    out.ids.push_back(bag.id);
    out.samples.push_back({model.predict_proba(bag), bag.label});
    if (keep_bags) out.bags.push_back(std::move(bag));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << content;
}

std::vector<double> parse_fraction_list(const std::vector<double>& fractions) {
  if (fractions.size() != 3 && fractions.size() != 4)
    throw ExitWith{2, "--fractions needs 3 values (train,val,test) or 4 (train,val,cal,test)"};
  return fractions;
}

// ---------------------------------------------------------------------
// subcommand setup

struct GenerateOpts {
  std::string out;
  std::size_t classes = 3, length = 64, channels = 1, n = 300;
  std::size_t motif_len = 16, motifs_min = 1, motifs_max = 3;
  double amplitude = 2.0, noise = 0.5;
  std::vector<double> fractions = {0.6, 0.2, 0.2};
  bool mix = false;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateOpts& o) {
  data::SyntheticSpec spec;
  spec.num_classes = o.classes;
  spec.length = o.length;
  spec.channels = o.channels;
  spec.motif_length = o.motif_len;
  spec.motifs_min = o.motifs_min;
  spec.motifs_max = o.motifs_max;
  spec.amplitude = o.amplitude;
  spec.noise_sigma = o.noise;
  spec.mix_other_classes = o.mix;
  spec.seed = o.seed;

  std::vector<std::size_t> per_class(o.classes, o.n / o.classes);
  for (std::size_t k = 0; k < o.n % o.classes; ++k) per_class[k] += 1;
  auto bags = data::generate_bags(spec, per_class);

  const auto fractions = parse_fraction_list(o.fractions);
  std::vector<std::string> names = fractions.size() == 3
                                       ? std::vector<std::string>{"train", "val", "test"}
                                       : std::vector<std::string>{"train", "val", "cal", "test"};
  std::vector<std::size_t> labels;
  for (const Bag& b : bags) labels.push_back(b.label);
  const auto splits =
      data::assign_splits(labels, {}, fractions, names, data::SplitMode::Random, o.seed);
  data::write_archive(o.out, o.classes, o.channels, bags, splits);
  std::cout << "archive: " << o.out << "\n"
            << "samples: " << bags.size() << "\n"
            << "fingerprint: " << data::archive_fingerprint(o.out) << "\n";
  return 0;
}

struct TrainOpts {
  std::string dataset, out, history;
  std::string pooling = "qtrans", pe = "sinusoidal";
  std::size_t embed_dim = 32, hidden = 32, kernel = 5;
  std::size_t epochs = 20, batch = 32, patience = 5;
  double lr = 0.005, wd = 0.001;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOpts& o) {
  const auto archive = data::read_archive(o.dataset);
  const auto train_bags = data::load_split(archive, "train", true);
  const auto val_bags = data::load_split(archive, "val", true);
  if (train_bags.empty() || val_bags.empty())
    throw ExitWith{2, "archive needs non-empty train and val splits"};

  mil::ModelConfig mc;
  mc.num_classes = archive.num_classes;
  mc.input_channels = archive.channels;
  mc.embed_dim = o.embed_dim;
  mc.hidden_channels = o.hidden;
  mc.kernel_width = o.kernel;
  mc.pooling = mil::pooling_from_string(o.pooling);
  mc.pos_encoding = mil::pos_encoding_from_string(o.pe);
  mc.seed = o.seed;

  training::TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.weight_decay = o.wd;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.patience = std::min(o.patience, o.epochs);
  tc.seed = o.seed;

  auto result = training::train(train_bags, val_bags, mc, tc);
  mil::save_checkpoint(result.model, o.out);
  if (!o.history.empty()) training::write_history_csv(result.history, o.history);
  std::cout << "best epoch: " << result.best_epoch << "\n"
            << "best val f1: " << result.best_val_f1 << "\n"
            << "checkpoint: " << o.out << "\n";
  return 0;
}

struct CalibrateOpts {
  std::string dataset, model, out;
  std::string split = "val", method = "exact";
  double alpha = 0.05, grid_resolution = 1e-3;
};

int cmd_calibrate(const CalibrateOpts& o) {
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ExitWith{2, "--alpha must lie in (0,1)"};
  const auto model = load_model_or_exit3(o.model);
  const auto archive = data::read_archive(o.dataset);
  check_compatible(model, archive);
  const auto scored = score_split(model, archive, o.split, false);

  conformal::CalibrationProfile profile;
  if (o.method == "exact") {
    profile = conformal::calibrate_exact(scored.samples, model.config().num_classes, o.alpha);
  } else if (o.method == "grid") {
    profile = conformal::calibrate_crc(scored.samples, model.config().num_classes, o.alpha, 1.0,
                                       conformal::uniform_grid(o.grid_resolution));
  } else {
    throw ExitWith{2, "--method must be exact or grid"};
  }
  for (std::size_t k : profile.infeasible_classes)
    std::cerr << "warning: class " << k
              << " has too few calibration samples for alpha=" << o.alpha
              << "; lambda forced to 1\n";
  conformal::save_profile(profile, o.out);
  std::cout << "profile: " << o.out << "\n";
  return 0;
}

nlohmann::json prediction_line(const std::string& id, const conformal::ScoredSample& sample,
                               const decision::DecisionOutcome& outcome) {
  nlohmann::json j;
  j["id"] = id;
  j["label"] = sample.label;
  j["p_hat"] = sample.p_hat;
  j["set"] = outcome.set.members;
  j["stratum"] = decision::to_string(outcome.stratum);
  return j;
}

struct PredictOpts {
  std::string dataset, model, profile, out;
  std::string split = "test";
};

int cmd_predict(const PredictOpts& o) {
  const auto model = load_model_or_exit3(o.model);
  const auto archive = data::read_archive(o.dataset);
  check_compatible(model, archive);
  const auto profile = conformal::load_profile(o.profile);
  check_profile(profile, model.config().num_classes);
  const auto scored = score_split(model, archive, o.split, false);

  std::ofstream os(o.out, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + o.out);
  for (std::size_t i = 0; i < scored.ids.size(); ++i) {
    const auto set = conformal::build_set(scored.samples[i].p_hat, profile);
    const auto outcome = decision::stratify(set, model.config().num_classes);
    os << prediction_line(scored.ids[i], scored.samples[i], outcome).dump() << "\n";
  }
  std::cout << "predictions: " << o.out << " (" << scored.ids.size() << " lines)\n";
  return 0;
}

struct EvaluateOpts {
  std::string dataset, model, profile, out_dir;
  std::string split = "test";
  std::string agent = "oracle";
  double skill_q = 0.8;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const EvaluateOpts& o) {
  const auto model = load_model_or_exit3(o.model);
  const auto archive = data::read_archive(o.dataset);
  check_compatible(model, archive);
  const auto profile = conformal::load_profile(o.profile);
  check_profile(profile, model.config().num_classes);
  const auto scored = score_split(model, archive, o.split, false);
  const std::size_t num_classes = model.config().num_classes;

  decision::AgentSpec agent;
  if (o.agent == "oracle") agent.kind = decision::AgentSpec::Kind::Oracle;
  else if (o.agent == "uniform") agent.kind = decision::AgentSpec::Kind::Uniform;
  else if (o.agent == "skill") agent.kind = decision::AgentSpec::Kind::Skill;
  else throw ExitWith{2, "--agent must be oracle, uniform or skill"};
  agent.skill_q = o.skill_q;

  std::vector<conformal::PredictionSet> sets;
  std::vector<decision::DecisionOutcome> outcomes;
  std::vector<std::size_t> truths;
  std::mt19937_64 agent_rng(o.seed);
  for (const auto& sample : scored.samples) {
    auto set = conformal::build_set(sample.p_hat, profile);
    auto outcome = decision::stratify(set, num_classes);
    if (outcome.stratum == decision::Stratum::Uncertain)
      outcome.chosen = decision::simulate_agent(outcome, sample.label, agent, agent_rng);
    sets.push_back(std::move(set));
    outcomes.push_back(std::move(outcome));
    truths.push_back(sample.label);
  }

  std::filesystem::create_directories(o.out_dir);
  const auto coverage = bench::coverage_metrics(sets, truths, num_classes, profile.alpha);
  write_text(std::filesystem::path(o.out_dir) / "coverage.json",
             bench::coverage_report_json(coverage) + "\n");
  write_text(std::filesystem::path(o.out_dir) / "coverage.csv",
             bench::coverage_report_csv(coverage));
  const auto report = decision::stratified_report(outcomes, truths);
  write_text(std::filesystem::path(o.out_dir) / "stratified.json",
             decision::report_to_json(report) + "\n");
  write_text(std::filesystem::path(o.out_dir) / "stratified.txt",
             decision::report_to_table(report));
  std::cout << decision::report_to_table(report);
  std::cout << "marginal coverage: " << coverage.marginal_coverage << "\n"
            << "avg set size: " << coverage.avg_set_size << "\n";
  return 0;
}

struct BenchOpts {
  std::string study, out_dir;
  std::string model, model_trans, dataset;
  std::string split = "test";
  std::vector<std::size_t> t_values = {128, 256, 512, 1024, 2048};
  std::size_t repeats = 5, classes = 5, embed_dim = 32;
  double alpha = 0.05;
  std::vector<double> fractions = {0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t trials = 10;
  std::vector<double> magnitudes = {0.0, 0.25, 0.5, 1.0};
  std::size_t shift_seeds = 20;
  // Generator settings for the shift study; must match the training data.
  std::size_t gen_length = 64, gen_motif_len = 16;
  double gen_amplitude = 2.0, gen_noise = 0.5;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchOpts& o) {
  std::filesystem::create_directories(o.out_dir);
  const std::filesystem::path out(o.out_dir);
  if (o.study == "timing") {
    for (auto kind : {mil::PoolingKind::Trans, mil::PoolingKind::QTrans}) {
      const auto report =
          bench::timing_scaling(kind, o.t_values, o.classes, o.embed_dim, o.repeats);
      const std::string stem = "timing_" + mil::to_string(kind);
      write_text(out / (stem + ".json"), bench::timing_report_json(report) + "\n");
      write_text(out / (stem + ".csv"), bench::timing_report_csv(report));
      std::cout << mil::to_string(kind) << " slope: " << report.loglog_slope << "\n";
    }
    return 0;
  }
  if (o.study == "entropy") {
    if (o.model.empty() || o.model_trans.empty() || o.dataset.empty())
      throw ExitWith{2, "entropy study needs --model, --model-trans and --data"};
    const auto qtrans = load_model_or_exit3(o.model);
    const auto trans = load_model_or_exit3(o.model_trans);
    const auto archive = data::read_archive(o.dataset);
    check_compatible(qtrans, archive);
    const auto bags = data::load_split(archive, o.split, true);
    const auto cmp = bench::entropy_compare(qtrans, trans, bags);
    write_text(out / "entropy.json", bench::entropy_report_json(cmp) + "\n");
    write_text(out / "entropy.csv", bench::entropy_report_csv(cmp));
    std::cout << "h_qtrans: " << cmp.h_qtrans << "\nh_trans: " << cmp.h_trans << "\n";
    return 0;
  }
  if (o.study == "shift") {
    if (o.model.empty()) throw ExitWith{2, "shift study needs --model"};
    const auto model = load_model_or_exit3(o.model);
    bench::ShiftStudyConfig cfg;
    cfg.alpha = o.alpha;
    cfg.noise_magnitudes = o.magnitudes;
    cfg.seeds = o.shift_seeds;
    cfg.base_seed = o.seed;
    cfg.generator.num_classes = model.config().num_classes;
    cfg.generator.channels = model.config().input_channels;
    cfg.generator.length = o.gen_length;
    cfg.generator.motif_length = o.gen_motif_len;
    cfg.generator.amplitude = o.gen_amplitude;
    cfg.generator.noise_sigma = o.gen_noise;
    const auto result = bench::shift_study(model, cfg);
    write_text(out / "shift.json", bench::shift_study_json(result) + "\n");
    write_text(out / "shift.csv", bench::shift_study_csv(result));
    std::cout << "spearman rho: " << result.spearman_rho << "\n";
    return 0;
  }
  if (o.study == "calfrac") {
    if (o.model.empty() || o.dataset.empty())
      throw ExitWith{2, "calfrac study needs --model and --data"};
    const auto model = load_model_or_exit3(o.model);
    const auto archive = data::read_archive(o.dataset);
    check_compatible(model, archive);
    const auto cal = score_split(model, archive, "val", false);
    const auto test = score_split(model, archive, o.split, false);
    const auto rows = bench::calibration_fraction_study(
        cal.samples, test.samples, model.config().num_classes, o.alpha, o.fractions, o.trials,
        o.seed);
    write_text(out / "calfrac.json", bench::fraction_study_json(rows) + "\n");
    write_text(out / "calfrac.csv", bench::fraction_study_csv(rows));
    for (const auto& r : rows)
      std::cout << "fraction " << r.fraction << ": mean coverage " << r.mean_coverage << "\n";
    return 0;
  }
  throw ExitWith{2, "--study must be timing, entropy, shift or calfrac"};
}

struct PackageOpts {
  std::string dataset, model, profile, out_dir;
  std::string split = "test";
  std::vector<std::string> ids;
  std::size_t limit = 4;
};

int cmd_package(const PackageOpts& o) {
  const auto model = load_model_or_exit3(o.model);
  const auto archive = data::read_archive(o.dataset);
  check_compatible(model, archive);
  const auto profile = conformal::load_profile(o.profile);
  check_profile(profile, model.config().num_classes);
  const std::size_t num_classes = model.config().num_classes;

  auto entries = archive.split_entries(o.split);
  std::sort(entries.begin(), entries.end(),
            [](const data::SampleEntry* a, const data::SampleEntry* b) { return a->id < b->id; });
  std::vector<const data::SampleEntry*> chosen;
  if (!o.ids.empty()) {
    for (const std::string& id : o.ids) {
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const data::SampleEntry* e) { return e->id == id; });
      if (it == entries.end()) throw ExitWith{2, "sample id not in split: " + id};
      chosen.push_back(*it);
    }
  } else {
    for (const auto* e : entries) {
      if (chosen.size() >= o.limit) break;
      chosen.push_back(e);
    }
  }

  for (const auto* e : chosen) {
    const Bag bag = data::load_sample(archive, *e, true);
    const auto pooling = model.forward_bag(bag.series);
    std::vector<double> p_hat(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double x = pooling.logits.at(0, k);
      p_hat[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    const auto set = conformal::build_set(p_hat, profile);
    const auto outcome = decision::stratify(set, num_classes);
    const auto heatmaps = interpret::extract_heatmaps(pooling, set.members, num_classes);
    const auto dir = std::filesystem::path(o.out_dir) / bag.id;
    interpret::emit_prompt_package(bag.id, bag.series, outcome, heatmaps, profile.alpha, dir);
    std::cout << "package: " << dir.string() << " (" << decision::to_string(outcome.stratum)
              << ")\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"MIL time-series classifier with conformal set-valued prediction"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenerateOpts gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic dataset archive");
  g->add_option("--out", gen.out, "output archive directory")->required();
  g->add_option("--classes", gen.classes, "number of classes K")->check(CLI::Range(2, 64));
  g->add_option("--length", gen.length, "series length T");
  g->add_option("--channels", gen.channels, "channels c");
  g->add_option("--n", gen.n, "total number of bags");
  g->add_option("--motif-len", gen.motif_len, "motif length L");
  g->add_option("--motifs-min", gen.motifs_min);
  g->add_option("--motifs-max", gen.motifs_max);
  g->add_option("--amplitude", gen.amplitude, "motif amplitude");
  g->add_option("--noise", gen.noise, "noise sigma");
  g->add_option("--fractions", gen.fractions, "split fractions")->delimiter(',');
  g->add_flag("--mix", gen.mix, "mix motifs of other classes into bags");
  g->add_option("--seed", gen.seed)->envname("CONMIL_SEED");

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Train the MIL classifier");
  t->add_option("--data", tr.dataset, "dataset archive")->required();
  t->add_option("--out", tr.out, "checkpoint path")->required();
  t->add_option("--history", tr.history, "training history CSV path");
  t->add_option("--pooling", tr.pooling)->check(CLI::IsMember({"conjunctive", "trans", "qtrans"}));
  t->add_option("--pe", tr.pe)->check(CLI::IsMember({"sinusoidal", "none"}));
  t->add_option("--embed-dim", tr.embed_dim);
  t->add_option("--hidden", tr.hidden);
  t->add_option("--kernel", tr.kernel);
  t->add_option("--epochs", tr.epochs);
  t->add_option("--batch", tr.batch);
  t->add_option("--patience", tr.patience);
  t->add_option("--lr", tr.lr);
  t->add_option("--wd", tr.wd);
  t->add_option("--seed", tr.seed)->envname("CONMIL_SEED");

  CalibrateOpts ca;
  auto* c = app.add_subcommand("calibrate", "Calibrate conformal thresholds");
  c->add_option("--data", ca.dataset)->required();
  c->add_option("--model", ca.model)->required();
  c->add_option("--out", ca.out, "profile JSON path")->required();
  c->add_option("--alpha", ca.alpha, "target per-class FNR level");
  c->add_option("--split", ca.split, "calibration split (val or cal)");
  c->add_option("--method", ca.method)->check(CLI::IsMember({"exact", "grid"}));
  c->add_option("--grid-resolution", ca.grid_resolution);

  PredictOpts pr;
  auto* p = app.add_subcommand("predict", "Emit per-sample set-valued predictions (JSONL)");
  p->add_option("--data", pr.dataset)->required();
  p->add_option("--model", pr.model)->required();
  p->add_option("--profile", pr.profile)->required();
  p->add_option("--out", pr.out, "output JSONL path")->required();
  p->add_option("--split", pr.split);

  EvaluateOpts ev;
  auto* e = app.add_subcommand("evaluate", "Coverage and stratified-accuracy reports");
  e->add_option("--data", ev.dataset)->required();
  e->add_option("--model", ev.model)->required();
  e->add_option("--profile", ev.profile)->required();
  e->add_option("--out-dir", ev.out_dir)->required();
  e->add_option("--split", ev.split);
  e->add_option("--agent", ev.agent)->check(CLI::IsMember({"oracle", "uniform", "skill"}));
  e->add_option("--skill-q", ev.skill_q)->check(CLI::Range(0.0, 1.0));
  e->add_option("--seed", ev.seed)->envname("CONMIL_SEED");

  BenchOpts be;
  auto* b = app.add_subcommand("bench", "Timing, entropy, shift and calibration studies");
  b->add_option("--study", be.study)->required()
      ->check(CLI::IsMember({"timing", "entropy", "shift", "calfrac"}));
  b->add_option("--out-dir", be.out_dir)->required();
  b->add_option("--model", be.model);
  b->add_option("--model-trans", be.model_trans);
  b->add_option("--data", be.dataset);
  b->add_option("--split", be.split);
  b->add_option("--t-values", be.t_values)->delimiter(',');
  b->add_option("--repeats", be.repeats);
  b->add_option("--classes", be.classes);
  b->add_option("--embed-dim", be.embed_dim);
  b->add_option("--alpha", be.alpha);
  b->add_option("--fractions", be.fractions)->delimiter(',');
  b->add_option("--trials", be.trials);
  b->add_option("--magnitudes", be.magnitudes)->delimiter(',');
  b->add_option("--shift-seeds", be.shift_seeds);
  b->add_option("--gen-length", be.gen_length, "shift-study generator series length");
  b->add_option("--gen-motif-len", be.gen_motif_len);
  b->add_option("--gen-amplitude", be.gen_amplitude);
  b->add_option("--gen-noise", be.gen_noise);
  b->add_option("--seed", be.seed)->envname("CONMIL_SEED");

  PackageOpts pk;
  auto* k = app.add_subcommand("package", "Emit prompt packages for selected samples");
  k->add_option("--data", pk.dataset)->required();
  k->add_option("--model", pk.model)->required();
  k->add_option("--profile", pk.profile)->required();
  k->add_option("--out-dir", pk.out_dir)->required();
  k->add_option("--split", pk.split);
  k->add_option("--ids", pk.ids)->delimiter(',');
  k->add_option("--limit", pk.limit, "package the first N samples when --ids is absent");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& help) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (c->parsed()) return cmd_calibrate(ca);
    if (p->parsed()) return cmd_predict(pr);
    if (e->parsed()) return cmd_evaluate(ev);
    if (b->parsed()) return cmd_bench(be);
    if (k->parsed()) return cmd_package(pk);
  } catch (const ExitWith& ex) {
    std::cerr << "error: " << ex.message << "\n";
    return ex.code;
  } catch (const training::NumericError& ex) {
    std::cerr << "numeric failure: " << ex.what() << "\n";
    return 4;
  } catch (const mil::CheckpointError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 4;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace cli
}  // namespace conmil
