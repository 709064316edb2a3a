#include "conmil/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace conmil {
namespace diffcore {

namespace {

NodePtr make_node(std::string op, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->op = std::move(op);
  n->parents = std::move(parents);
  return n;
}

void require_2d(const std::string& op, const NdArray& a) {
  if (a.shape().size() != 2) throw ShapeError(op, "expected 2-d operand, got " + a.shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

NodePtr leaf(NdArray value, bool trainable) {
  auto n = make_node("leaf", {});
  n->value = std::move(value);
  n->trainable = trainable;
  return n;
}

NodePtr constant(NdArray value) { return leaf(std::move(value), false); }

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  require_2d("matmul", a->value);
  require_2d("matmul", b->value);
  if (a->value.cols() != b->value.rows()) throw ShapeError("matmul", a->value, b->value);
  auto n = make_node("matmul", {a, b});
  n->forward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
    self.value = NdArray({m, p});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double aij = A.at(i, j);
        if (aij == 0.0) continue;
        for (std::size_t c = 0; c < p; ++c) self.value.at(i, c) += aij * B.at(j, c);
      }
    }
  };
  n->backward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    NdArray& dA = self.parents[0]->adjoint;
    NdArray& dB = self.parents[1]->adjoint;
    const NdArray& dC = self.adjoint;
    const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
    // dA += dC * B^T ; dB += A^T * dC
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < p; ++c) s += dC.at(i, c) * B.at(j, c);
        dA.at(i, j) += s;
      }
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t c = 0; c < p; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += A.at(i, j) * dC.at(i, c);
        dB.at(j, c) += s;
      }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr conv1d(const NodePtr& x, const NodePtr& w, const NodePtr& bias) {
  require_2d("conv1d", x->value);
  if (w->value.shape().size() != 3)
    throw ShapeError("conv1d", "expected 3-d kernel, got " + w->value.shape_str());
  const std::size_t c_in = x->value.cols();
  const std::size_t c_out = w->value.shape()[0];
  const std::size_t kw = w->value.shape()[2];
  if (w->value.shape()[1] != c_in) throw ShapeError("conv1d", x->value, w->value);
  if (bias && !(bias->value.rows() == 1 && bias->value.cols() == c_out))
    throw ShapeError("conv1d", bias->value, w->value);

  std::vector<NodePtr> parents = {x, w};
  if (bias) parents.push_back(bias);
  auto n = make_node("conv1d", std::move(parents));
  n->forward_fn = [c_in, c_out, kw](Node& self) {
    const NdArray& X = self.parents[0]->value;
    const NdArray& W = self.parents[1]->value;
    const bool has_bias = self.parents.size() == 3;
    const std::size_t t_len = X.rows();
    const std::size_t pad = kw / 2;
    self.value = NdArray({t_len, c_out});
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t co = 0; co < c_out; ++co) {
        double s = has_bias ? self.parents[2]->value.at(0, co) : 0.0;
        for (std::size_t k = 0; k < kw; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
          for (std::size_t ci = 0; ci < c_in; ++ci)
            s += X.at(static_cast<std::size_t>(src), ci) * W[(co * c_in + ci) * kw + k];
        }
        self.value.at(t, co) = s;
      }
    }
  };
  n->backward_fn = [c_in, c_out, kw](Node& self) {
    const NdArray& X = self.parents[0]->value;
    const NdArray& W = self.parents[1]->value;
    NdArray& dX = self.parents[0]->adjoint;
    NdArray& dW = self.parents[1]->adjoint;
    const NdArray& dY = self.adjoint;
    const bool has_bias = self.parents.size() == 3;
    const std::size_t t_len = X.rows();
    const std::size_t pad = kw / 2;
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t co = 0; co < c_out; ++co) {
        const double g = dY.at(t, co);
        if (g == 0.0) continue;
        if (has_bias) self.parents[2]->adjoint.at(0, co) += g;
        for (std::size_t k = 0; k < kw; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
          for (std::size_t ci = 0; ci < c_in; ++ci) {
            dW[(co * c_in + ci) * kw + k] += g * X.at(static_cast<std::size_t>(src), ci);
            dX.at(static_cast<std::size_t>(src), ci) += g * W[(co * c_in + ci) * kw + k];
          }
        }
      }
    }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  const bool broadcast = !a->value.same_shape(b->value);
  if (broadcast && !(b->value.rows() == 1 && b->value.cols() == a->value.cols()))
    throw ShapeError("add", a->value, b->value);
  auto n = make_node("add", {a, b});
  n->forward_fn = [broadcast](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    self.value = A;
    if (!broadcast) {
      for (std::size_t i = 0; i < A.size(); ++i) self.value[i] += B[i];
    } else {
      for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) self.value.at(r, c) += B.at(0, c);
    }
  };
  n->backward_fn = [broadcast](Node& self) {
    NdArray& dA = self.parents[0]->adjoint;
    NdArray& dB = self.parents[1]->adjoint;
    const NdArray& d = self.adjoint;
    for (std::size_t i = 0; i < d.size(); ++i) dA[i] += d[i];
    if (!broadcast) {
      for (std::size_t i = 0; i < d.size(); ++i) dB[i] += d[i];
    } else {
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) dB.at(0, c) += d.at(r, c);
    }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  if (!a->value.same_shape(b->value)) throw ShapeError("mul", a->value, b->value);
  auto n = make_node("mul", {a, b});
  n->forward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    self.value = A;
    for (std::size_t i = 0; i < A.size(); ++i) self.value[i] *= B[i];
  };
  n->backward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    for (std::size_t i = 0; i < A.size(); ++i) {
      self.parents[0]->adjoint[i] += self.adjoint[i] * B[i];
      self.parents[1]->adjoint[i] += self.adjoint[i] * A[i];
    }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr add_scalar(const NodePtr& a, double s) {
  auto n = make_node("add_scalar", {a});
  n->forward_fn = [s](Node& self) {
    self.value = self.parents[0]->value;
    for (std::size_t i = 0; i < self.value.size(); ++i) self.value[i] += s;
  };
  n->backward_fn = [](Node& self) {
    for (std::size_t i = 0; i < self.adjoint.size(); ++i)
      self.parents[0]->adjoint[i] += self.adjoint[i];
  };
  n->forward_fn(*n);
  return n;
}

NodePtr mul_scalar(const NodePtr& a, double s) {
  auto n = make_node("mul_scalar", {a});
  n->forward_fn = [s](Node& self) {
    self.value = self.parents[0]->value;
    for (std::size_t i = 0; i < self.value.size(); ++i) self.value[i] *= s;
  };
  n->backward_fn = [s](Node& self) {
    for (std::size_t i = 0; i < self.adjoint.size(); ++i)
      self.parents[0]->adjoint[i] += s * self.adjoint[i];
  };
  n->forward_fn(*n);
  return n;
}

NodePtr relu(const NodePtr& a) {
  auto n = make_node("relu", {a});
  n->forward_fn = [](Node& self) {
    self.value = self.parents[0]->value;
    for (std::size_t i = 0; i < self.value.size(); ++i)
      if (self.value[i] < 0.0) self.value[i] = 0.0;
  };
  n->backward_fn = [](Node& self) {
    const NdArray& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) self.parents[0]->adjoint[i] += self.adjoint[i];
  };
  n->forward_fn(*n);
  return n;
}

NodePtr sigmoid(const NodePtr& a) {
  auto n = make_node("sigmoid", {a});
  n->forward_fn = [](Node& self) {
    self.value = self.parents[0]->value;
    for (std::size_t i = 0; i < self.value.size(); ++i)
      self.value[i] = stable_sigmoid(self.value[i]);
  };
  n->backward_fn = [](Node& self) {
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      self.parents[0]->adjoint[i] += self.adjoint[i] * y * (1.0 - y);
    }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr softmax_rows(const NodePtr& a) {
  require_2d("softmax", a->value);
  auto n = make_node("softmax", {a});
  n->forward_fn = [](Node& self) {
    const NdArray& X = self.parents[0]->value;
    self.value = X;
    for (std::size_t r = 0; r < X.rows(); ++r) {
      double mx = X.at(r, 0);
      for (std::size_t c = 1; c < X.cols(); ++c) mx = std::max(mx, X.at(r, c));
      double sum = 0.0;
      for (std::size_t c = 0; c < X.cols(); ++c) {
        self.value.at(r, c) = std::exp(X.at(r, c) - mx);
        sum += self.value.at(r, c);
      }
      for (std::size_t c = 0; c < X.cols(); ++c) self.value.at(r, c) /= sum;
    }
  };
  n->backward_fn = [](Node& self) {
    const NdArray& y = self.value;
    const NdArray& dy = self.adjoint;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += dy.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        self.parents[0]->adjoint.at(r, c) += y.at(r, c) * (dy.at(r, c) - dot);
    }
  };
  n->forward_fn(*n);
  return n;
}

NodePtr mean_all(const NodePtr& a) {
  if (a->value.size() == 0) throw ShapeError("mean", "empty operand");
  auto n = make_node("mean", {a});
  n->forward_fn = [](Node& self) {
    const NdArray& X = self.parents[0]->value;
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
    self.value = NdArray::scalar(s / static_cast<double>(X.size()));
  };
  n->backward_fn = [](Node& self) {
    const double g = self.adjoint[0] / static_cast<double>(self.parents[0]->value.size());
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i)
      self.parents[0]->adjoint[i] += g;
  };
  n->forward_fn(*n);
  return n;
}

NodePtr mean_axis0(const NodePtr& a) {
  require_2d("mean_axis0", a->value);
  if (a->value.rows() == 0) throw ShapeError("mean_axis0", "empty operand");
  auto n = make_node("mean_axis0", {a});
  n->forward_fn = [](Node& self) {
    const NdArray& X = self.parents[0]->value;
    self.value = NdArray({1, X.cols()});
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t c = 0; c < X.cols(); ++c) self.value.at(0, c) += X.at(r, c);
    for (std::size_t c = 0; c < X.cols(); ++c)
      self.value.at(0, c) /= static_cast<double>(X.rows());
  };
  n->backward_fn = [](Node& self) {
    const NdArray& X = self.parents[0]->value;
    const double inv = 1.0 / static_cast<double>(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t c = 0; c < X.cols(); ++c)
        self.parents[0]->adjoint.at(r, c) += self.adjoint.at(0, c) * inv;
  };
  n->forward_fn(*n);
  return n;
}

NodePtr concat_rows(const NodePtr& a, const NodePtr& b) {
  require_2d("concat", a->value);
  require_2d("concat", b->value);
  if (a->value.cols() != b->value.cols()) throw ShapeError("concat", a->value, b->value);
  auto n = make_node("concat", {a, b});
  n->forward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    const NdArray& B = self.parents[1]->value;
    self.value = NdArray({A.rows() + B.rows(), A.cols()});
    std::copy(A.data().begin(), A.data().end(), self.value.data().begin());
    std::copy(B.data().begin(), B.data().end(),
              self.value.data().begin() + static_cast<std::ptrdiff_t>(A.size()));
  };
  n->backward_fn = [](Node& self) {
    NdArray& dA = self.parents[0]->adjoint;
    NdArray& dB = self.parents[1]->adjoint;
    for (std::size_t i = 0; i < dA.size(); ++i) dA[i] += self.adjoint[i];
    for (std::size_t i = 0; i < dB.size(); ++i) dB[i] += self.adjoint[dA.size() + i];
  };
  n->forward_fn(*n);
  return n;
}

NodePtr slice_rows(const NodePtr& a, std::size_t r0, std::size_t r1) {
  require_2d("slice", a->value);
  if (r0 >= r1 || r1 > a->value.rows())
    throw ShapeError("slice", "rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                                  ") out of range for " + a->value.shape_str());
  auto n = make_node("slice", {a});
  n->forward_fn = [r0, r1](Node& self) {
    const NdArray& A = self.parents[0]->value;
    self.value = NdArray({r1 - r0, A.cols()});
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) self.value.at(r - r0, c) = A.at(r, c);
  };
  n->backward_fn = [r0, r1](Node& self) {
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < self.value.cols(); ++c)
        self.parents[0]->adjoint.at(r, c) += self.adjoint.at(r - r0, c);
  };
  n->forward_fn(*n);
  return n;
}

NodePtr transpose(const NodePtr& a) {
  require_2d("transpose", a->value);
  auto n = make_node("transpose", {a});
  n->forward_fn = [](Node& self) {
    const NdArray& A = self.parents[0]->value;
    self.value = NdArray({A.cols(), A.rows()});
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) self.value.at(c, r) = A.at(r, c);
  };
  n->backward_fn = [](Node& self) {
    const NdArray& d = self.adjoint;
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c) self.parents[0]->adjoint.at(c, r) += d.at(r, c);
  };
  n->forward_fn(*n);
  return n;
}

NodePtr bce_with_logits(const NodePtr& logits, const NdArray& targets) {
  if (!logits->value.same_shape(targets)) throw ShapeError("bce_with_logits", logits->value, targets);
  auto tgt = std::make_shared<NdArray>(targets);
  auto n = make_node("bce_with_logits", {logits});
  n->forward_fn = [tgt](Node& self) {
    const NdArray& x = self.parents[0]->value;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double xi = x[i];
      s += std::max(xi, 0.0) - xi * (*tgt)[i] + std::log1p(std::exp(-std::abs(xi)));
    }
    self.value = NdArray::scalar(s / static_cast<double>(x.size()));
  };
  n->backward_fn = [tgt](Node& self) {
    const NdArray& x = self.parents[0]->value;
    const double g = self.adjoint[0] / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      self.parents[0]->adjoint[i] += g * (stable_sigmoid(x[i]) - (*tgt)[i]);
  };
  n->forward_fn(*n);
  return n;
}

std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  // Iterative post-order DFS; graphs are small but can be deep.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

const NdArray& forward(const NodePtr& root) {
  for (Node* n : topo_order(root)) {
    if (n->forward_fn) n->forward_fn(*n);
    if (n->parents.empty() && !n->value.all_finite())
      throw ShapeError(n->op, "non-finite leaf value");
  }
  return root->value;
}

void backward(const NodePtr& root) {
  if (!root->value.is_scalar())
    throw ShapeError("backward", "root must be scalar, got " + root->value.shape_str());
  auto order = topo_order(root);
  for (Node* n : order) n->adjoint = NdArray::zeros(n->value.shape());
  root->adjoint[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

std::map<const Node*, NdArray> gradients(const NodePtr& root) {
  backward(root);
  std::map<const Node*, NdArray> out;
  for (Node* n : topo_order(root))
    if (n->trainable) out[n] = n->adjoint;
  return out;
}

double grad_check(const NodePtr& root, const NodePtr& leaf, double h) {
  forward(root);
  backward(root);
  const NdArray analytic = leaf->adjoint;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaf->value.size(); ++i) {
    const double saved = leaf->value[i];
    leaf->value[i] = saved + h;
    const double fp = forward(root)[0];
    leaf->value[i] = saved - h;
    const double fm = forward(root)[0];
    leaf->value[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  forward(root);
  return worst;
}

}  // namespace diffcore
}  // namespace conmil
