#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "conmil/ndarray.hpp"

namespace conmil {
namespace diffcore {

// Thrown when an op is applied to operands of incompatible shapes; the
// message names the op and both shapes.
class ShapeError : public std::runtime_error {
 public:
  ShapeError(const std::string& op, const NdArray& a, const NdArray& b)
      : std::runtime_error(op + ": incompatible shapes " + a.shape_str() + " and " +
                           b.shape_str()) {}
  ShapeError(const std::string& op, const std::string& detail)
      : std::runtime_error(op + ": " + detail) {}
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the (acyclic) computation graph. Leaves have no parents
// and no forward_fn; their value is bound directly. The adjoint always
// matches the value's shape after backward().
struct Node {
  std::string op;
  std::vector<NodePtr> parents;
  NdArray value;
  NdArray adjoint;
  bool trainable = false;
  std::function<void(Node&)> forward_fn;
  std::function<void(Node&)> backward_fn;
};

NodePtr leaf(NdArray value, bool trainable = false);
NodePtr constant(NdArray value);

// Primitive set: the smallest closure covering the encoder, the three
// pooling mechanisms and the loss.
NodePtr matmul(const NodePtr& a, const NodePtr& b);
// x: T x c_in, w: (c_out, c_in, kw), bias: 1 x c_out (may be null).
// Stride 1, zero "same" padding.
NodePtr conv1d(const NodePtr& x, const NodePtr& w, const NodePtr& bias);
// Elementwise; b may also be a 1 x n row broadcast over an m x n a.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr add_scalar(const NodePtr& a, double s);
NodePtr mul_scalar(const NodePtr& a, double s);
NodePtr relu(const NodePtr& a);
NodePtr sigmoid(const NodePtr& a);
NodePtr softmax_rows(const NodePtr& a);
NodePtr mean_all(const NodePtr& a);    // -> 1x1
NodePtr mean_axis0(const NodePtr& a);  // m x n -> 1 x n
NodePtr concat_rows(const NodePtr& a, const NodePtr& b);
NodePtr slice_rows(const NodePtr& a, std::size_t r0, std::size_t r1);
NodePtr transpose(const NodePtr& a);
// Mean of elementwise binary cross-entropy between logits and fixed
// 0/1 targets, in the numerically stable log1p(exp(-|x|)) form. -> 1x1
NodePtr bce_with_logits(const NodePtr& logits, const NdArray& targets);

// Recomputes every non-leaf value in topological order and returns the
// root's value. Safe to call repeatedly after leaf values change.
const NdArray& forward(const NodePtr& root);

// Reverse-mode sweep from a scalar root; fills adjoints of every node
// reachable from the root, summing over all paths. forward() must have
// run on the current leaf values.
void backward(const NodePtr& root);

// Gradients of a scalar root w.r.t. every trainable leaf, keyed by node.
std::map<const Node*, NdArray> gradients(const NodePtr& root);

// Central-difference check of d root / d leaf. Perturbs every element of
// the leaf by +-h, recomputes forward, and compares against the analytic
// adjoint. Returns the worst relative error, with denominator
// max(1, |analytic|).
double grad_check(const NodePtr& root, const NodePtr& leaf, double h = 1e-5);

std::vector<Node*> topo_order(const NodePtr& root);

}  // namespace diffcore
}  // namespace conmil
