#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conmil/bag.hpp"
#include "conmil/graph.hpp"
#include "conmil/ndarray.hpp"

namespace conmil {
namespace mil {

using diffcore::NodePtr;

enum class PoolingKind { Conjunctive, Trans, QTrans };
enum class PosEncoding { Sinusoidal, None };

std::string to_string(PoolingKind k);
std::string to_string(PosEncoding k);
PoolingKind pooling_from_string(const std::string& s);
PosEncoding pos_encoding_from_string(const std::string& s);

struct ModelConfig {
  std::size_t num_classes = 3;      // K
  std::size_t embed_dim = 32;       // d
  std::size_t input_channels = 1;   // c
  std::size_t hidden_channels = 32; // encoder mid width
  std::size_t kernel_width = 5;
  PoolingKind pooling = PoolingKind::QTrans;
  PosEncoding pos_encoding = PosEncoding::Sinusoidal;
  std::uint64_t seed = 0;

  void validate() const;
};

// Pooled per-class embeddings plus the attention map actually used by
// the pooling: K x T (qtrans) or 1 x T (trans / conjunctive).
struct PoolingOutput {
  NdArray pooled;     // K x d (qtrans) or 1 x d
  NdArray attention;  // K x T or 1 x T
  NdArray logits;     // 1 x K
};

// Fixed sinusoidal positional encoding, T x d.
NdArray sinusoidal_encoding(std::size_t t_len, std::size_t dim);

// Two conv blocks (c -> hidden -> d, relu) plus optional positional
// encoding, then one of three pooling mechanisms and a classifier head.
// Parameters are shared graph leaves, so any graph built through the
// model differentiates back into them.
class MilModel {
 public:
  explicit MilModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // Graph builders; forward() has already run on the returned nodes.
  NodePtr encode_graph(const NdArray& series) const;  // T x d
  struct PoolGraph {
    NodePtr logits;     // 1 x K
    NodePtr attention;  // raw attention node (K x T, 1 x T, or trans row over T+1)
    NodePtr pooled;
  };
  PoolGraph pool_conjunctive_graph(const NodePtr& z) const;
  PoolGraph pool_trans_graph(const NodePtr& z) const;
  // softmax_mode replaces the sigmoid(. + bias) gate by a row softmax;
  // it exists only so tests can cross-check against trans attention.
  PoolGraph pool_qtrans_graph(const NodePtr& z, bool softmax_mode = false) const;
  PoolGraph pool_graph(const NodePtr& z) const;
  NodePtr loss_graph(const Bag& bag) const;  // scalar BCE over K one-vs-rest outputs

  // Value-level API.
  NdArray encode(const NdArray& series) const;
  PoolingOutput pool(const NdArray& z) const;
  PoolingOutput forward_bag(const NdArray& series) const;
  // Per-class sigmoid scores in [0,1]^K. Requires a trained model.
  std::vector<double> predict_proba(const Bag& bag) const;

  std::map<std::string, NodePtr>& params() { return params_; }
  const std::map<std::string, NodePtr>& params() const { return params_; }
  const NdArray& param_value(const std::string& name) const;
  void set_param_value(const std::string& name, const NdArray& v);

  std::map<std::string, NdArray> export_weights() const;
  void import_weights(const std::map<std::string, NdArray>& w);

  bool trained() const { return trained_; }
  void mark_trained(bool t = true) { trained_ = t; }

  std::size_t epoch = 0;  // best epoch recorded by training, kept in checkpoints

 private:
  PoolingOutput extract_output(const PoolGraph& g) const;

  ModelConfig cfg_;
  std::map<std::string, NodePtr> params_;
  bool trained_ = false;
};

}  // namespace mil
}  // namespace conmil
