#pragma once

#include <memory>
#include <vector>

#include "metapop/game.hpp"

namespace metapop {

class Tape;
using Var = int;

// Escape hatch for nodes whose backward rule is computed outside the op
// vocabulary (the implicit best-response node). Contributions produced by
// `vjp` are constants: such nodes support one outer differentiation only.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual Vector forward(const std::vector<Vector>& parents) const = 0;
  virtual void vjp(Tape& tape, Var self, Var adjoint,
                   std::vector<std::pair<Var, Var>>& contribs) const = 0;
};

// Reverse-mode tape over dense vectors. Every pullback is expressed with the
// same op vocabulary, so adjoints are recorded nodes and gradients can be
// differentiated again (gradient-of-gradient), which is how best-response
// updates stay differentiable inside the unrolled solver loop.
class Tape {
 public:
  Var leaf(const Vector& value);            // differentiable input
  Var constant(const Vector& value);
  Var constant_scalar(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var smul(Var s, Var v);                   // scalar node * vector node
  Var cmul(Var a, const Vector& c);         // elementwise constant weight
  Var mul(Var a, Var b);                    // elementwise
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var bcast(Var s, int n);
  Var segment(Var a, int offset, int len);
  Var scatter(Var a, int offset, int total);
  Var concat(const std::vector<Var>& parts);
  Var softmax(Var a);
  Var relu(Var a);
  Var expv(Var a);
  // y = A x (or A^T x); A is constant data shared across nodes.
  Var matvec(std::shared_ptr<const Matrix> a, Var x, bool transpose);
  // y = W x (or W^T x) where W is a node holding rows*cols entries row-major.
  Var matvec_param(Var w, int rows, int cols, Var x, bool transpose);
  // vec(a b^T), row-major.
  Var outer_flat(Var a, Var b);
  Var custom(std::shared_ptr<const CustomOp> op, std::vector<Var> parents,
             Vector value);

  const Vector& value(Var v) const { return nodes_[v].value; }
  double scalar_value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v].requires_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse accumulation from a scalar node. Returns one adjoint node per
  // target (a zero constant where no differentiable path exists). The
  // adjoints are recorded nodes and may be differentiated again.
  std::vector<Var> gradient(Var objective, const std::vector<Var>& targets);

  // Recompute every node value in creation order from the leaves.
  void replay();

 private:
  enum class Op {
    kLeaf, kConst, kAdd, kSub, kScale, kSmul, kCmul, kMul, kDot, kSum,
    kBcast, kSegment, kScatter, kConcat, kSoftmax, kRelu, kExp,
    kMatvecConst, kMatvecParam, kOuterFlat, kCustom,
  };

  struct Node {
    Op op;
    bool requires_grad = false;
    Vector value;
    std::vector<Var> parents;
    int i0 = 0, i1 = 0;  // op-specific (offset/len, rows/cols, size)
    bool flag = false;   // transpose for matvec ops
    double c = 0.0;
    Vector cvec;                           // kCmul weights
    std::shared_ptr<const Matrix> mat;     // kMatvecConst
    std::shared_ptr<const CustomOp> cop;   // kCustom
  };

  Var push(Node node);
  Vector compute(const Node& node) const;
  void pullback(const Node& node, Var adjoint,
                std::vector<std::pair<Var, Var>>& contribs);

  std::vector<Node> nodes_;
};

}  // namespace metapop
