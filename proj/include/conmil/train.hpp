#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "conmil/bag.hpp"
#include "conmil/model.hpp"

namespace conmil {
namespace training {

struct TrainConfig {
  double learning_rate = 0.005;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Raised when the loss goes non-finite; the CLI maps it to exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamWState {
  std::map<std::string, NdArray> m;
  std::map<std::string, NdArray> v;
  std::size_t step = 0;
};

// One decoupled-weight-decay update: moments with bias correction, decay
// applied directly to the parameter rather than through the gradient.
void adamw_step(std::map<std::string, mil::NodePtr>& params,
                const std::map<std::string, NdArray>& grads, AdamWState& state,
                const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  mil::MilModel model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
};

// Supervised loop: BCE over K one-vs-rest outputs, AdamW, early stopping
// on validation macro-F1; returns the weights from the best-F1 epoch.
TrainResult train(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set,
                  const mil::ModelConfig& model_cfg, const TrainConfig& cfg);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path);

// Top-1 metrics on argmax of the per-class scores.
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);
double macro_f1(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                std::size_t num_classes);

std::vector<std::size_t> predict_labels(const mil::MilModel& model, const std::vector<Bag>& bags);

}  // namespace training
}  // namespace conmil
