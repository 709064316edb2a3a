#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "conmil/bag.hpp"

namespace conmil {
namespace data {

enum class MotifKind { Sine, Square };

struct MotifSpec {
  MotifKind kind = MotifKind::Sine;
  double frequency = 1.0;  // cycles per motif length; ignored for Square
};

struct SyntheticSpec {
  std::size_t num_classes = 3;
  std::size_t length = 64;   // T
  std::size_t channels = 1;  // c
  std::vector<MotifSpec> motifs;  // one per class; filled with distinct sines when empty
  std::size_t motif_length = 16;  // L
  double amplitude = 2.0;
  double noise_sigma = 0.5;
  std::size_t motifs_min = 1;
  std::size_t motifs_max = 3;
  // When set, bags whose class placed >= 2 motifs also receive one motif
  // of another class; the bag label stays the majority class.
  bool mix_other_classes = false;
  std::uint64_t seed = 0;

  SyntheticSpec with_defaults() const;  // fills motifs, checks invariants
};

struct GeneratedBag {
  Bag bag;
  // Draw log: (class, start) of every motif actually placed, in draw order.
  std::vector<std::pair<std::size_t, std::size_t>> placements;
};

// Gaussian noise plus non-overlapping class motifs at random positions;
// instance labels mark the covered time steps per class. The bag's class
// always contributes at least one motif and a strict majority of them.
std::vector<GeneratedBag> generate(const SyntheticSpec& spec, std::size_t n_per_class);
std::vector<GeneratedBag> generate(const SyntheticSpec& spec,
                                   const std::vector<std::size_t>& per_class_counts);
std::vector<Bag> generate_bags(const SyntheticSpec& spec, std::size_t n_per_class);
std::vector<Bag> generate_bags(const SyntheticSpec& spec,
                               const std::vector<std::size_t>& per_class_counts);

struct SampleEntry {
  std::string id;
  std::string file;
  std::size_t label = 0;
  std::string split;
  std::string group;           // optional
  std::string instances_file;  // optional, synthetic instance labels
};

// Directory archive: manifest.json plus one CSV per sample (T rows x c
// columns, header ch0..ch{c-1}), values as shortest round-trip decimals
// of 32-bit floats. Standardization statistics come from the train split.
struct DatasetArchive {
  std::filesystem::path root;
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  std::vector<SampleEntry> samples;
  std::vector<double> standard_mean;
  std::vector<double> standard_std;

  std::vector<const SampleEntry*> split_entries(const std::string& split) const;
  DatasetArchive filtered(const std::string& split) const;
};

enum class SplitMode { Random, Group };

// Stratified split assignment: global sizes follow the fractions by
// largest remainder; samples are dealt class by class to the split with
// the largest remaining deficit, so per-class proportions track the
// global ones. Group mode deals whole groups instead and never splits
// one across subsets.
std::vector<std::string> assign_splits(const std::vector<std::size_t>& labels,
                                       const std::vector<std::string>& groups,
                                       const std::vector<double>& fractions,
                                       const std::vector<std::string>& split_names,
                                       SplitMode mode, std::uint64_t seed);

struct ArchiveSplits {
  DatasetArchive train;
  DatasetArchive val;
  DatasetArchive test;
};

ArchiveSplits split(const DatasetArchive& archive, const std::array<double, 3>& fractions,
                    SplitMode mode, std::uint64_t seed);

void write_archive(const std::filesystem::path& root, std::size_t num_classes,
                   std::size_t channels, const std::vector<Bag>& bags,
                   const std::vector<std::string>& splits,
                   const std::vector<std::string>& groups = {});
DatasetArchive read_archive(const std::filesystem::path& root);

Bag load_sample(const DatasetArchive& archive, const SampleEntry& entry, bool standardize);
std::vector<Bag> load_split(const DatasetArchive& archive, const std::string& split,
                            bool standardize);

enum class ShiftKind { AmplitudeScale, NoiseAdd, LabelPrior };
ShiftKind shift_kind_from_string(const std::string& s);

// Deterministic transform of the test split written to a new root;
// all other files are copied byte for byte. Magnitude 0 disables the
// transform for every kind.
DatasetArchive inject_shift(const DatasetArchive& archive, ShiftKind kind, double magnitude,
                            const std::filesystem::path& out_root);

// Hex SHA-256 over the manifest and all sample files in manifest order.
std::string archive_fingerprint(const std::filesystem::path& root);

}  // namespace data
}  // namespace conmil
