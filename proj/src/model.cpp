#include "conmil/model.hpp"

#include <cmath>
#include <stdexcept>

#include "conmil/rng.hpp"

namespace conmil {
namespace mil {

using namespace diffcore;

std::string to_string(PoolingKind k) {
  switch (k) {
    case PoolingKind::Conjunctive: return "conjunctive";
    case PoolingKind::Trans: return "trans";
    case PoolingKind::QTrans: return "qtrans";
  }
  return "qtrans";
}

std::string to_string(PosEncoding k) {
  return k == PosEncoding::Sinusoidal ? "sinusoidal" : "none";
}

PoolingKind pooling_from_string(const std::string& s) {
  if (s == "conjunctive") return PoolingKind::Conjunctive;
  if (s == "trans") return PoolingKind::Trans;
  if (s == "qtrans") return PoolingKind::QTrans;
  throw std::invalid_argument("unknown pooling kind: " + s);
}

PosEncoding pos_encoding_from_string(const std::string& s) {
  if (s == "sinusoidal") return PosEncoding::Sinusoidal;
  if (s == "none") return PosEncoding::None;
  throw std::invalid_argument("unknown positional encoding: " + s);
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes must be >= 2");
  if (embed_dim < 1) throw std::invalid_argument("ModelConfig: embed_dim must be >= 1");
  if (input_channels < 1 || hidden_channels < 1)
    throw std::invalid_argument("ModelConfig: channel widths must be >= 1");
  if (kernel_width < 1) throw std::invalid_argument("ModelConfig: kernel_width must be >= 1");
}

NdArray sinusoidal_encoding(std::size_t t_len, std::size_t dim) {
  NdArray pe({t_len, dim});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
      pe.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

NdArray uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& g) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  NdArray w(std::move(shape));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng::uniform(g, -bound, bound);
  return w;
}

NdArray token_init(std::vector<std::size_t> shape, std::mt19937_64& g) {
  NdArray w(std::move(shape));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng::normal(g, 0.0, 0.02);
  return w;
}

}  // namespace

MilModel::MilModel(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 g(cfg_.seed);
  const std::size_t c = cfg_.input_channels, h = cfg_.hidden_channels, d = cfg_.embed_dim;
  const std::size_t k = cfg_.num_classes, kw = cfg_.kernel_width;

  auto add_param = [&](const std::string& name, NdArray v) {
    params_[name] = leaf(std::move(v), true);
  };

  add_param("conv1.weight", uniform_init({h, c, kw}, c * kw, g));
  add_param("conv1.bias", NdArray({1, h}));
  add_param("conv2.weight", uniform_init({d, h, kw}, h * kw, g));
  add_param("conv2.bias", NdArray({1, d}));

  switch (cfg_.pooling) {
    case PoolingKind::Conjunctive:
      add_param("attn.weight", uniform_init({d, 1}, d, g));
      add_param("attn.bias", NdArray({1, 1}));
      add_param("head.weight", uniform_init({d, k}, d, g));
      add_param("head.bias", NdArray({1, k}));
      break;
    case PoolingKind::Trans:
      add_param("cls_token", token_init({1, d}, g));
      add_param("wq", uniform_init({d, d}, d, g));
      add_param("wk", uniform_init({d, d}, d, g));
      add_param("wv", uniform_init({d, d}, d, g));
      add_param("wo", uniform_init({d, d}, d, g));
      add_param("head.weight", uniform_init({d, k}, d, g));
      add_param("head.bias", NdArray({1, k}));
      break;
    case PoolingKind::QTrans:
      add_param("cls_tokens", token_init({k, d}, g));
      add_param("wq", uniform_init({d, d}, d, g));
      add_param("wk", uniform_init({d, d}, d, g));
      add_param("wv", uniform_init({d, d}, d, g));
      add_param("head.weight", uniform_init({k, d}, d, g));
      add_param("head.bias", NdArray({1, k}));
      break;
  }
}

const NdArray& MilModel::param_value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
  return it->second->value;
}

void MilModel::set_param_value(const std::string& name, const NdArray& v) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
  if (!it->second->value.same_shape(v))
    throw std::invalid_argument("parameter " + name + " shape mismatch: " +
                                it->second->value.shape_str() + " vs " + v.shape_str());
  it->second->value = v;
}

std::map<std::string, NdArray> MilModel::export_weights() const {
  std::map<std::string, NdArray> out;
  for (const auto& [name, node] : params_) out[name] = node->value;
  return out;
}

void MilModel::import_weights(const std::map<std::string, NdArray>& w) {
  for (const auto& [name, v] : w) set_param_value(name, v);
}

NodePtr MilModel::encode_graph(const NdArray& series) const {
  if (series.shape().size() != 2 || series.rows() < 1)
    throw std::invalid_argument("encode: series must be T x c with T >= 1, got " +
                                series.shape_str());
  if (series.cols() != cfg_.input_channels)
    throw std::invalid_argument("encode: series has " + std::to_string(series.cols()) +
                                " channels, model expects " +
                                std::to_string(cfg_.input_channels));
  if (!series.all_finite()) throw std::invalid_argument("encode: non-finite series");

  NodePtr x = constant(series);
  NodePtr z = relu(conv1d(x, params_.at("conv1.weight"), params_.at("conv1.bias")));
  z = relu(conv1d(z, params_.at("conv2.weight"), params_.at("conv2.bias")));
  if (cfg_.pos_encoding == PosEncoding::Sinusoidal)
    z = add(z, constant(sinusoidal_encoding(series.rows(), cfg_.embed_dim)));
  return z;
}

MilModel::PoolGraph MilModel::pool_conjunctive_graph(const NodePtr& z) const {
  const std::size_t t_len = z->value.rows();
  if (t_len == 0) throw std::invalid_argument("pool_conjunctive: empty bag");
  // a_t = sigmoid(w_a . z_t + b_a); logits = mean_t a_t * g(z_t)
  NodePtr gate = sigmoid(add(matmul(z, params_.at("attn.weight")), params_.at("attn.bias")));
  NodePtr inst_logits = add(matmul(z, params_.at("head.weight")), params_.at("head.bias"));
  NodePtr gate_tiled = matmul(gate, constant(NdArray::full({1, cfg_.num_classes}, 1.0)));
  NodePtr logits = mean_axis0(mul(inst_logits, gate_tiled));
  // Attention-weighted feature mean doubles as the pooled embedding.
  NodePtr z_tiled = mul(z, matmul(gate, constant(NdArray::full({1, cfg_.embed_dim}, 1.0))));
  NodePtr pooled = mean_axis0(z_tiled);
  PoolGraph out;
  out.logits = logits;
  out.attention = transpose(gate);  // 1 x T
  out.pooled = pooled;
  (void)t_len;
  return out;
}

MilModel::PoolGraph MilModel::pool_trans_graph(const NodePtr& z) const {
  if (z->value.rows() == 0) throw std::invalid_argument("pool_trans: empty bag");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
  NodePtr zc = concat_rows(params_.at("cls_token"), z);  // (T+1) x d
  NodePtr q = matmul(zc, params_.at("wq"));
  NodePtr k = matmul(zc, params_.at("wk"));
  NodePtr v = matmul(zc, params_.at("wv"));
  NodePtr attn = softmax_rows(mul_scalar(matmul(q, transpose(k)), inv_sqrt_d));
  NodePtr zhat = matmul(matmul(attn, v), params_.at("wo"));
  NodePtr pooled = slice_rows(zhat, 0, 1);  // refined class token
  NodePtr logits = add(matmul(pooled, params_.at("head.weight")), params_.at("head.bias"));
  PoolGraph out;
  out.logits = logits;
  out.attention = slice_rows(attn, 0, 1);  // class-token row over T+1 positions
  out.pooled = pooled;
  return out;
}

MilModel::PoolGraph MilModel::pool_qtrans_graph(const NodePtr& z, bool softmax_mode) const {
  const std::size_t t_len = z->value.rows();
  if (t_len == 0) throw std::invalid_argument("pool_qtrans: empty bag (log T undefined)");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
  NodePtr q = matmul(params_.at("cls_tokens"), params_.at("wq"));  // K x d
  NodePtr k = matmul(z, params_.at("wk"));                         // T x d
  NodePtr v = matmul(z, params_.at("wv"));                         // T x d
  NodePtr scores = mul_scalar(matmul(q, transpose(k)), inv_sqrt_d);
  NodePtr attn;
  if (softmax_mode) {
    attn = softmax_rows(scores);
  } else {
    attn = sigmoid(add_scalar(scores, -std::log(static_cast<double>(t_len))));
  }
  NodePtr pooled = matmul(attn, v);  // K x d
  // Block-diagonal head: class k's logit reads only pooled row k.
  NodePtr hw = mul(pooled, params_.at("head.weight"));
  NodePtr sums = transpose(matmul(hw, constant(NdArray::full({cfg_.embed_dim, 1}, 1.0))));
  NodePtr logits = add(sums, params_.at("head.bias"));
  PoolGraph out;
  out.logits = logits;
  out.attention = attn;  // K x T
  out.pooled = pooled;
  return out;
}

MilModel::PoolGraph MilModel::pool_graph(const NodePtr& z) const {
  switch (cfg_.pooling) {
    case PoolingKind::Conjunctive: return pool_conjunctive_graph(z);
    case PoolingKind::Trans: return pool_trans_graph(z);
    case PoolingKind::QTrans: return pool_qtrans_graph(z);
  }
  throw std::logic_error("unreachable");
}

NodePtr MilModel::loss_graph(const Bag& bag) const {
  if (bag.label >= cfg_.num_classes)
    throw std::invalid_argument("loss_graph: label " + std::to_string(bag.label) +
                                " out of range for K=" + std::to_string(cfg_.num_classes));
  NodePtr z = encode_graph(bag.series);
  PoolGraph g = pool_graph(z);
  NdArray one_hot({1, cfg_.num_classes});
  one_hot.at(0, bag.label) = 1.0;
  return bce_with_logits(g.logits, one_hot);
}

NdArray MilModel::encode(const NdArray& series) const {
  return encode_graph(series)->value;
}

PoolingOutput MilModel::extract_output(const PoolGraph& g) const {
  PoolingOutput out;
  out.logits = g.logits->value;
  out.pooled = g.pooled->value;
  if (cfg_.pooling == PoolingKind::Trans) {
    // Drop the class-token self-weight, renormalize over the T instances.
    const NdArray& row = g.attention->value;  // 1 x (T+1)
    const std::size_t t_len = row.cols() - 1;
    out.attention = NdArray({1, t_len});
    double sum = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) sum += row.at(0, t + 1);
    for (std::size_t t = 0; t < t_len; ++t)
      out.attention.at(0, t) = sum > 0.0 ? row.at(0, t + 1) / sum : 1.0 / t_len;
  } else {
    out.attention = g.attention->value;
  }
  return out;
}

PoolingOutput MilModel::pool(const NdArray& z) const {
  return extract_output(pool_graph(constant(z)));
}

PoolingOutput MilModel::forward_bag(const NdArray& series) const {
  return extract_output(pool_graph(encode_graph(series)));
}

std::vector<double> MilModel::predict_proba(const Bag& bag) const {
  if (!trained_)
    throw std::logic_error("predict_proba: model has not been trained or loaded");
  PoolingOutput out = forward_bag(bag.series);
  std::vector<double> p(cfg_.num_classes);
  for (std::size_t k = 0; k < cfg_.num_classes; ++k) {
    const double x = out.logits.at(0, k);
    p[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return p;
}

}  // namespace mil
}  // namespace conmil
