#include "conmil/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "conmil/graph.hpp"
#include "conmil/rng.hpp"

namespace conmil {
namespace training {

using namespace diffcore;

void TrainConfig::validate() const {
  if (learning_rate < 0.0 || weight_decay < 0.0)
    throw std::invalid_argument("TrainConfig: rates must be non-negative");
  if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
    throw std::invalid_argument("TrainConfig: betas must lie in (0,1)");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("TrainConfig: zero size");
  if (patience > epochs) throw std::invalid_argument("TrainConfig: patience exceeds epochs");
}

void adamw_step(std::map<std::string, mil::NodePtr>& params,
                const std::map<std::string, NdArray>& grads, AdamWState& state,
                const TrainConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, node] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const NdArray& g = git->second;
    if (!g.same_shape(node->value))
      throw std::invalid_argument("adamw_step: gradient shape mismatch for " + name);
    NdArray& m = state.m.try_emplace(name, NdArray::zeros(g.shape())).first->second;
    NdArray& v = state.v.try_emplace(name, NdArray::zeros(g.shape())).first->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double& p = node->value[i];
      p -= cfg.learning_rate * cfg.weight_decay * p;
      p -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("accuracy: misaligned inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double macro_f1(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                std::size_t num_classes) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("macro_f1: misaligned inputs");
  double sum = 0.0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool p = predicted[i] == k, t = truth[i] == k;
      if (p && t) ++tp;
      else if (p) ++fp;
      else if (t) ++fn;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(num_classes);
}

std::vector<std::size_t> predict_labels(const mil::MilModel& model, const std::vector<Bag>& bags) {
  std::vector<std::size_t> out;
  out.reserve(bags.size());
  for (const Bag& bag : bags) {
    const NdArray logits = model.forward_bag(bag.series).logits;
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits.at(0, k) > logits.at(0, best)) best = k;
    out.push_back(best);
  }
  return out;
}

namespace {

// Mean gradient of the batch loss over the given bags.
double batch_gradients(const mil::MilModel& model, const std::vector<Bag>& bags,
                       const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
                       std::map<std::string, NdArray>& grads_out) {
  grads_out.clear();
  const double inv = 1.0 / static_cast<double>(end - begin);
  double loss_sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    NodePtr loss = model.loss_graph(bags[idx[i]]);
    loss_sum += loss->value[0];
    backward(loss);
    for (const auto& [name, node] : model.params()) {
      NdArray& acc = grads_out.try_emplace(name, NdArray::zeros(node->value.shape()))
                         .first->second;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += inv * node->adjoint[j];
    }
  }
  return loss_sum * inv;
}

}  // namespace

TrainResult train(const std::vector<Bag>& train_set, const std::vector<Bag>& val_set,
                  const mil::ModelConfig& model_cfg, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation split");
  for (const Bag& b : train_set)
    if (b.label >= model_cfg.num_classes)
      throw std::invalid_argument("train: label out of range in training split");

  mil::MilModel model(model_cfg);
  AdamWState opt;
  std::mt19937_64 shuffle_rng(cfg.seed);

  std::vector<std::size_t> truth_val(val_set.size());
  for (std::size_t i = 0; i < val_set.size(); ++i) truth_val[i] = val_set[i].label;

  TrainResult result{mil::MilModel(model_cfg), {}, 0, -1.0};
  std::map<std::string, NdArray> best_weights = model.export_weights();
  std::map<std::string, NdArray> grads;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = rng::shuffled_indices(train_set.size(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const double loss = batch_gradients(model, train_set, order, begin, end, grads);
      if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      adamw_step(model.params(), grads, opt, cfg);
      loss_sum += loss;
      ++batches;
    }

    const auto val_pred = predict_labels(model, val_set);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    stats.val_f1 = macro_f1(val_pred, truth_val, model_cfg.num_classes);
    stats.val_acc = accuracy(val_pred, truth_val);
    result.history.push_back(stats);

    if (stats.val_f1 > result.best_val_f1) {
      result.best_val_f1 = stats.val_f1;
      result.best_epoch = epoch;
      best_weights = model.export_weights();
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }

  result.model.import_weights(best_weights);
  result.model.epoch = result.best_epoch;
  result.model.mark_trained();
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "epoch,train_loss,val_f1,val_acc\n";
  char buf[160];
  for (const EpochStats& s : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g\n", s.epoch, s.train_loss, s.val_f1,
                  s.val_acc);
    os << buf;
  }
}

}  // namespace training
}  // namespace conmil
