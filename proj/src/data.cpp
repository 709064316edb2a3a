#include "conmil/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include <json.hpp>
#include <openssl/evp.h>

#include "conmil/rng.hpp"

namespace conmil {
namespace data {

namespace {

constexpr double kPi = std::numbers::pi;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string format_f32(double v) {
  char buf[48];
  const float f = static_cast<float>(v);
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), f);
  if (ec != std::errc()) throw std::runtime_error("float formatting failed");
  return std::string(buf, ptr);
}

double parse_f32(std::string_view text) {
  float f = 0.0f;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), f);
  if (ec != std::errc()) throw std::runtime_error("bad float in archive: " + std::string(text));
  return static_cast<double>(f);
}

double motif_value(const MotifSpec& motif, std::size_t i, std::size_t motif_len,
                   double amplitude) {
  switch (motif.kind) {
    case MotifKind::Sine:
      return amplitude * std::sin(2.0 * kPi * motif.frequency * static_cast<double>(i) /
                                  static_cast<double>(motif_len));
    case MotifKind::Square:
      return (2 * i < motif_len) ? amplitude : -amplitude;
  }
  return 0.0;
}

// Non-overlapping with a gap of at least one step, so label spans stay
// countable as contiguous runs.
std::optional<std::size_t> draw_start(std::size_t series_len, std::size_t motif_len,
                                      const std::vector<std::pair<std::size_t, std::size_t>>&
                                          placements,
                                      std::mt19937_64& g) {
  const std::size_t max_start = series_len - motif_len;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t s = static_cast<std::size_t>(rng::uniform_index(g, max_start + 1));
    bool clash = false;
    for (const auto& [cls, other] : placements) {
      (void)cls;
      const std::size_t lo = other > motif_len ? other - motif_len - 1 : 0;
      if (s >= lo && s <= other + motif_len) {
        clash = true;
        break;
      }
    }
    if (!clash) return s;
  }
  return std::nullopt;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void hash_file_into(EVP_MD_CTX* ctx, const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + p.string());
  char buf[1 << 14];
  while (is) {
    is.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  }
}

}  // namespace

SyntheticSpec SyntheticSpec::with_defaults() const {
  SyntheticSpec spec = *this;
  if (spec.num_classes < 2) throw std::invalid_argument("SyntheticSpec: need K >= 2");
  if (spec.motif_length > spec.length)
    throw std::invalid_argument("SyntheticSpec: motif length exceeds series length");
  if (spec.motif_length < 2) throw std::invalid_argument("SyntheticSpec: motif too short");
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("SyntheticSpec: negative noise");
  if (spec.motifs_min < 1 || spec.motifs_min > spec.motifs_max)
    throw std::invalid_argument("SyntheticSpec: bad motifs-per-bag range");
  if (spec.motifs.empty()) {
    spec.motifs.resize(spec.num_classes);
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      spec.motifs[k] = {MotifKind::Sine, static_cast<double>(k + 1)};
  }
  if (spec.motifs.size() != spec.num_classes)
    throw std::invalid_argument("SyntheticSpec: one motif per class required");
  std::set<double> sine_freqs;
  for (const MotifSpec& m : spec.motifs)
    if (m.kind == MotifKind::Sine && !sine_freqs.insert(m.frequency).second)
      throw std::invalid_argument("SyntheticSpec: sine frequencies must be distinct");
  return spec;
}

std::vector<GeneratedBag> generate(const SyntheticSpec& spec, std::size_t n_per_class) {
  return generate(spec, std::vector<std::size_t>(spec.num_classes ? spec.num_classes : 1,
                                                 n_per_class));
}

std::vector<GeneratedBag> generate(const SyntheticSpec& raw_spec,
                                   const std::vector<std::size_t>& per_class_counts) {
  const SyntheticSpec spec = raw_spec.with_defaults();
  if (per_class_counts.size() != spec.num_classes)
    throw std::invalid_argument("generate: one count per class required");
  std::mt19937_64 g(spec.seed);
  std::vector<GeneratedBag> out;

  std::size_t serial = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t i = 0; i < per_class_counts[k]; ++i) {
      GeneratedBag gb;
      Bag& bag = gb.bag;
      char idbuf[24];
      std::snprintf(idbuf, sizeof(idbuf), "bag_%05zu", serial++);
      bag.id = idbuf;
      bag.label = k;
      bag.series = NdArray({spec.length, spec.channels});
      for (std::size_t t = 0; t < spec.length; ++t)
        for (std::size_t c = 0; c < spec.channels; ++c)
          bag.series.at(t, c) = rng::normal(g, 0.0, spec.noise_sigma);

      const std::size_t want =
          spec.motifs_min +
          static_cast<std::size_t>(rng::uniform_index(g, spec.motifs_max - spec.motifs_min + 1));
      for (std::size_t m = 0; m < want; ++m) {
        auto start = draw_start(spec.length, spec.motif_length, gb.placements, g);
        if (!start) break;
        gb.placements.emplace_back(k, *start);
      }
      if (gb.placements.empty()) {
        // Center placement as a last resort; an empty bag would break the
        // bag/instance label contract.
        gb.placements.emplace_back(k, (spec.length - spec.motif_length) / 2);
      }
      if (spec.mix_other_classes && gb.placements.size() >= 2) {
        const std::size_t other =
            (k + 1 + rng::uniform_index(g, spec.num_classes - 1)) % spec.num_classes;
        auto start = draw_start(spec.length, spec.motif_length, gb.placements, g);
        if (start) gb.placements.emplace_back(other, *start);
      }

      bag.instance_labels = NdArray({spec.length, spec.num_classes});
      for (const auto& [cls, start] : gb.placements) {
        for (std::size_t j = 0; j < spec.motif_length; ++j) {
          const double v = motif_value(spec.motifs[cls], j, spec.motif_length, spec.amplitude);
          for (std::size_t c = 0; c < spec.channels; ++c) bag.series.at(start + j, c) += v;
          bag.instance_labels.at(start + j, cls) = 1.0;
        }
      }
      out.push_back(std::move(gb));
    }
  }
  return out;
}

std::vector<Bag> generate_bags(const SyntheticSpec& spec, std::size_t n_per_class) {
  std::vector<Bag> bags;
  for (auto& gb : generate(spec, n_per_class)) bags.push_back(std::move(gb.bag));
  return bags;
}

std::vector<Bag> generate_bags(const SyntheticSpec& spec,
                               const std::vector<std::size_t>& per_class_counts) {
  std::vector<Bag> bags;
  for (auto& gb : generate(spec, per_class_counts)) bags.push_back(std::move(gb.bag));
  return bags;
}

std::vector<const SampleEntry*> DatasetArchive::split_entries(const std::string& split) const {
  std::vector<const SampleEntry*> out;
  for (const SampleEntry& e : samples)
    if (e.split == split) out.push_back(&e);
  return out;
}

DatasetArchive DatasetArchive::filtered(const std::string& split) const {
  DatasetArchive out = *this;
  out.samples.clear();
  for (const SampleEntry& e : samples)
    if (e.split == split) out.samples.push_back(e);
  return out;
}

std::vector<std::string> assign_splits(const std::vector<std::size_t>& labels,
                                       const std::vector<std::string>& groups,
                                       const std::vector<double>& fractions,
                                       const std::vector<std::string>& split_names,
                                       SplitMode mode, std::uint64_t seed) {
  if (fractions.size() != split_names.size() || fractions.empty())
    throw std::invalid_argument("assign_splits: fractions/names mismatch");
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw std::invalid_argument("assign_splits: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("assign_splits: fractions must sum to 1");
  const std::size_t n = labels.size();
  if (mode == SplitMode::Group) {
    if (groups.size() != n) throw std::invalid_argument("assign_splits: group column absent");
    for (const std::string& gr : groups)
      if (gr.empty())
        throw std::invalid_argument("assign_splits: group column absent for some samples");
  }

  // Global target sizes by largest remainder.
  const std::size_t n_splits = fractions.size();
  std::vector<std::size_t> target(n_splits);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < n_splits; ++s) {
    const double exact = fractions[s] * static_cast<double>(n);
    target[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += target[s];
    remainder.emplace_back(exact - std::floor(exact + 1e-9), s);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) target[remainder[i % n_splits].second]++;

  std::mt19937_64 g(seed);
  std::vector<std::string> out(n);
  std::vector<std::size_t> filled(n_splits, 0);

  if (mode == SplitMode::Random) {
    // Deal class by class toward per-class quotas f_s * n_k, capped by the
    // exact global targets, so every class tracks the global proportions.
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    for (auto& [cls, idx] : by_class) {
      (void)cls;
      const double n_k = static_cast<double>(idx.size());
      std::vector<std::size_t> class_filled(n_splits, 0);
      auto order = rng::shuffled_indices(idx.size(), g);
      for (std::size_t o : order) {
        std::size_t best = n_splits;
        double best_deficit = -1e300;
        for (std::size_t s = 0; s < n_splits; ++s) {
          if (filled[s] >= target[s]) continue;
          const double deficit = fractions[s] * n_k - static_cast<double>(class_filled[s]);
          if (deficit > best_deficit) {
            best_deficit = deficit;
            best = s;
          }
        }
        out[idx[o]] = split_names[best];
        ++filled[best];
        ++class_filled[best];
      }
    }
  } else {
    std::map<std::string, std::vector<std::size_t>> by_group;
    for (std::size_t i = 0; i < n; ++i) by_group[groups[i]].push_back(i);
    std::vector<std::string> group_names;
    for (const auto& [name, idx] : by_group) {
      (void)idx;
      group_names.push_back(name);
    }
    auto order = rng::shuffled_indices(group_names.size(), g);
    for (std::size_t o : order) {
      const auto& idx = by_group[group_names[o]];
      // Whole group to the split with the largest remaining deficit.
      std::size_t best = 0;
      long long best_deficit = std::numeric_limits<long long>::min();
      for (std::size_t s = 0; s < n_splits; ++s) {
        const long long deficit =
            static_cast<long long>(target[s]) - static_cast<long long>(filled[s]);
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = s;
        }
      }
      for (std::size_t i : idx) out[i] = split_names[best];
      filled[best] += idx.size();
    }
  }
  return out;
}

ArchiveSplits split(const DatasetArchive& archive, const std::array<double, 3>& fractions,
                    SplitMode mode, std::uint64_t seed) {
  std::vector<std::size_t> labels;
  std::vector<std::string> groups;
  bool any_group = false;
  for (const SampleEntry& e : archive.samples) {
    labels.push_back(e.label);
    groups.push_back(e.group);
    if (!e.group.empty()) any_group = true;
  }
  if (mode == SplitMode::Group && !any_group)
    throw std::invalid_argument("split: group mode requires a group column");
  const auto assigned =
      assign_splits(labels, groups, {fractions[0], fractions[1], fractions[2]},
                    {"train", "val", "test"}, mode, seed);
  DatasetArchive tagged = archive;
  for (std::size_t i = 0; i < tagged.samples.size(); ++i) tagged.samples[i].split = assigned[i];
  return {tagged.filtered("train"), tagged.filtered("val"), tagged.filtered("test")};
}

void write_archive(const std::filesystem::path& root, std::size_t num_classes,
                   std::size_t channels, const std::vector<Bag>& bags,
                   const std::vector<std::string>& splits,
                   const std::vector<std::string>& groups) {
  if (splits.size() != bags.size())
    throw std::invalid_argument("write_archive: one split tag per bag required");
  if (!groups.empty() && groups.size() != bags.size())
    throw std::invalid_argument("write_archive: one group per bag required");
  std::filesystem::create_directories(root / "samples");

  // Standardization statistics from the float32-rounded train values, so
  // reading the archive back reproduces them exactly.
  std::vector<double> mean(channels, 0.0), sq(channels, 0.0);
  std::size_t train_steps = 0;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    if (splits[i] != "train") continue;
    const NdArray& x = bags[i].series;
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = round_f32(x.at(t, c));
        mean[c] += v;
        sq[c] += v * v;
      }
    train_steps += x.rows();
  }
  std::vector<double> stddev(channels, 1.0);
  if (train_steps > 0) {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] /= static_cast<double>(train_steps);
      const double var = sq[c] / static_cast<double>(train_steps) - mean[c] * mean[c];
      stddev[c] = std::sqrt(std::max(var, 0.0));
      if (stddev[c] < 1e-12) stddev[c] = 1.0;
    }
  } else {
    mean.assign(channels, 0.0);
  }

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["K"] = num_classes;
  manifest["c"] = channels;
  manifest["standardization"] = {{"mean", mean}, {"std", stddev}};
  nlohmann::json samples = nlohmann::json::array();

  for (std::size_t i = 0; i < bags.size(); ++i) {
    const Bag& bag = bags[i];
    if (bag.series.cols() != channels)
      throw std::invalid_argument("write_archive: channel mismatch for " + bag.id);
    const std::string file = "samples/" + bag.id + ".csv";
    std::ofstream os(root / file);
    if (!os) throw std::runtime_error("cannot open for writing: " + (root / file).string());
    for (std::size_t c = 0; c < channels; ++c) os << (c ? "," : "") << "ch" << c;
    os << "\n";
    for (std::size_t t = 0; t < bag.series.rows(); ++t) {
      for (std::size_t c = 0; c < channels; ++c)
        os << (c ? "," : "") << format_f32(bag.series.at(t, c));
      os << "\n";
    }

    nlohmann::json entry = {{"id", bag.id}, {"file", file}, {"label", bag.label},
                            {"split", splits[i]}};
    if (!groups.empty() && !groups[i].empty()) entry["group"] = groups[i];
    if (bag.has_instance_labels()) {
      const std::string inst_file = "samples/" + bag.id + ".instances.csv";
      std::ofstream li(root / inst_file);
      for (std::size_t k = 0; k < num_classes; ++k) li << (k ? "," : "") << "k" << k;
      li << "\n";
      for (std::size_t t = 0; t < bag.instance_labels.rows(); ++t) {
        for (std::size_t k = 0; k < num_classes; ++k)
          li << (k ? "," : "") << (bag.instance_labels.at(t, k) > 0.5 ? 1 : 0);
        li << "\n";
      }
      entry["instances"] = inst_file;
    }
    samples.push_back(entry);
  }
  manifest["samples"] = samples;

  std::ofstream ms(root / "manifest.json");
  if (!ms) throw std::runtime_error("cannot open for writing: " + (root / "manifest.json").string());
  ms << manifest.dump(2) << "\n";
}

DatasetArchive read_archive(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.json");
  if (!is) throw std::runtime_error("cannot open: " + (root / "manifest.json").string());
  nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported archive version");

  DatasetArchive archive;
  archive.root = root;
  archive.num_classes = manifest.at("K").get<std::size_t>();
  archive.channels = manifest.at("c").get<std::size_t>();
  archive.standard_mean = manifest.at("standardization").at("mean").get<std::vector<double>>();
  archive.standard_std = manifest.at("standardization").at("std").get<std::vector<double>>();
  std::set<std::string> ids;
  for (const auto& j : manifest.at("samples")) {
    SampleEntry e;
    e.id = j.at("id").get<std::string>();
    e.file = j.at("file").get<std::string>();
    e.label = j.at("label").get<std::size_t>();
    e.split = j.at("split").get<std::string>();
    if (j.contains("group")) e.group = j.at("group").get<std::string>();
    if (j.contains("instances")) e.instances_file = j.at("instances").get<std::string>();
    if (e.label >= archive.num_classes)
      throw std::runtime_error("archive label out of range for sample " + e.id);
    if (!ids.insert(e.id).second) throw std::runtime_error("duplicate sample id " + e.id);
    if (!std::filesystem::exists(root / e.file))
      throw std::runtime_error("manifest entry does not resolve: " + e.file);
    archive.samples.push_back(std::move(e));
  }
  return archive;
}

namespace {

std::vector<std::vector<double>> read_csv(const std::filesystem::path& path,
                                          std::size_t expect_cols) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty csv: " + path.string());
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::size_t end = comma == std::string::npos ? line.size() : comma;
      row.push_back(parse_f32(std::string_view(line).substr(pos, end - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (row.size() != expect_cols)
      throw std::runtime_error("bad column count in " + path.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Bag load_sample(const DatasetArchive& archive, const SampleEntry& entry, bool standardize) {
  const auto rows = read_csv(archive.root / entry.file, archive.channels);
  Bag bag;
  bag.id = entry.id;
  bag.label = entry.label;
  bag.series = NdArray({rows.size(), archive.channels});
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t c = 0; c < archive.channels; ++c) {
      double v = rows[t][c];
      if (standardize) v = (v - archive.standard_mean[c]) / archive.standard_std[c];
      bag.series.at(t, c) = v;
    }
  if (!entry.instances_file.empty()) {
    const auto lab = read_csv(archive.root / entry.instances_file, archive.num_classes);
    if (lab.size() != rows.size())
      throw std::runtime_error("instance labels length mismatch for " + entry.id);
    bag.instance_labels = NdArray({lab.size(), archive.num_classes});
    for (std::size_t t = 0; t < lab.size(); ++t)
      for (std::size_t k = 0; k < archive.num_classes; ++k)
        bag.instance_labels.at(t, k) = lab[t][k];
  }
  return bag;
}

std::vector<Bag> load_split(const DatasetArchive& archive, const std::string& split,
                            bool standardize) {
  std::vector<Bag> bags;
  for (const SampleEntry* e : archive.split_entries(split))
    bags.push_back(load_sample(archive, *e, standardize));
  return bags;
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "amplitude-scale") return ShiftKind::AmplitudeScale;
  if (s == "noise-add") return ShiftKind::NoiseAdd;
  if (s == "label-prior") return ShiftKind::LabelPrior;
  throw std::invalid_argument("unknown shift kind: " + s);
}

DatasetArchive inject_shift(const DatasetArchive& archive, ShiftKind kind, double magnitude,
                            const std::filesystem::path& out_root) {
  if (magnitude < 0.0) throw std::invalid_argument("inject_shift: magnitude must be >= 0");
  std::filesystem::create_directories(out_root / "samples");

  std::uint64_t mag_bits = 0;
  std::memcpy(&mag_bits, &magnitude, sizeof(magnitude));

  // Label-prior shift thins classes k > 0 of the test split.
  std::vector<std::size_t> class_seen(archive.num_classes, 0), class_total(archive.num_classes, 0);
  for (const SampleEntry& e : archive.samples)
    if (e.split == "test") ++class_total[e.label];

  std::vector<Bag> bags;
  std::vector<std::string> splits, groups;
  bool any_group = false;
  for (const SampleEntry& e : archive.samples) {
    const bool is_test = e.split == "test";
    if (kind == ShiftKind::LabelPrior && magnitude > 0.0 && is_test) {
      const double drop = archive.num_classes > 1
                              ? magnitude * static_cast<double>(e.label) /
                                    static_cast<double>(archive.num_classes - 1)
                              : 0.0;
      const double keep = std::max(0.0, 1.0 - std::min(drop, 0.95));
      const std::size_t keep_n = static_cast<std::size_t>(
          std::ceil(keep * static_cast<double>(class_total[e.label])));
      if (class_seen[e.label]++ >= keep_n) continue;
    }
    Bag bag = load_sample(archive, e, false);
    if (is_test && magnitude > 0.0) {
      if (kind == ShiftKind::AmplitudeScale) {
        for (std::size_t i = 0; i < bag.series.size(); ++i)
          bag.series[i] = round_f32(bag.series[i] * magnitude);
      } else if (kind == ShiftKind::NoiseAdd) {
        std::mt19937_64 g(fnv1a(e.id) ^ mag_bits);
        for (std::size_t i = 0; i < bag.series.size(); ++i)
          bag.series[i] = round_f32(bag.series[i] + rng::normal(g, 0.0, magnitude));
      }
    }
    bags.push_back(std::move(bag));
    splits.push_back(e.split);
    groups.push_back(e.group);
    if (!e.group.empty()) any_group = true;
  }
  // Rewriting recomputes train standardization from unchanged files, so
  // the statistics are preserved.
  write_archive(out_root, archive.num_classes, archive.channels, bags, splits,
                any_group ? groups : std::vector<std::string>{});
  return read_archive(out_root);
}

std::string archive_fingerprint(const std::filesystem::path& root) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  hash_file_into(ctx, root / "manifest.json");
  const DatasetArchive archive = read_archive(root);
  for (const SampleEntry& e : archive.samples) {
    EVP_DigestUpdate(ctx, e.file.data(), e.file.size());
    hash_file_into(ctx, root / e.file);
    if (!e.instances_file.empty()) hash_file_into(ctx, root / e.instances_file);
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace data
}  // namespace conmil
