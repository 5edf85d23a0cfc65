#include "metapop/tape.hpp"

#include <cmath>

#include "metapop/check.hpp"

namespace metapop {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

Vector softmax_value(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp();
  return e / e.sum();
}

}  // namespace

Var Tape::push(Node node) {
  for (Var p : node.parents) node.requires_grad |= nodes_[p].requires_grad;
  nodes_.push_back(std::move(node));
  return static_cast<Var>(nodes_.size() - 1);
}

double Tape::scalar_value(Var v) const {
  require(nodes_[v].value.size() == 1, "tape: node is not a scalar");
  return nodes_[v].value(0);
}

Var Tape::leaf(const Vector& value) {
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = value;
  return push(std::move(n));
}

Var Tape::constant(const Vector& value) {
  Node n;
  n.op = Op::kConst;
  n.value = value;
  return push(std::move(n));
}

Var Tape::constant_scalar(double value) {
  return constant(Vector::Constant(1, value));
}

Var Tape::add(Var a, Var b) {
  Node n;
  n.op = Op::kAdd;
  n.parents = {a, b};
  n.value = nodes_[a].value + nodes_[b].value;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  Node n;
  n.op = Op::kSub;
  n.parents = {a, b};
  n.value = nodes_[a].value - nodes_[b].value;
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.parents = {a};
  n.c = c;
  n.value = c * nodes_[a].value;
  return push(std::move(n));
}

Var Tape::smul(Var s, Var v) {
  require(nodes_[s].value.size() == 1, "smul: first argument must be scalar");
  Node n;
  n.op = Op::kSmul;
  n.parents = {s, v};
  n.value = nodes_[s].value(0) * nodes_[v].value;
  return push(std::move(n));
}

Var Tape::cmul(Var a, const Vector& c) {
  Node n;
  n.op = Op::kCmul;
  n.parents = {a};
  n.cvec = c;
  n.value = nodes_[a].value.cwiseProduct(c);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  Node n;
  n.op = Op::kMul;
  n.parents = {a, b};
  n.value = nodes_[a].value.cwiseProduct(nodes_[b].value);
  return push(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  Node n;
  n.op = Op::kDot;
  n.parents = {a, b};
  n.value = Vector::Constant(1, nodes_[a].value.dot(nodes_[b].value));
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.parents = {a};
  n.value = Vector::Constant(1, nodes_[a].value.sum());
  return push(std::move(n));
}

Var Tape::bcast(Var s, int size) {
  Node n;
  n.op = Op::kBcast;
  n.parents = {s};
  n.i0 = size;
  n.value = Vector::Constant(size, nodes_[s].value(0));
  return push(std::move(n));
}

Var Tape::segment(Var a, int offset, int len) {
  Node n;
  n.op = Op::kSegment;
  n.parents = {a};
  n.i0 = offset;
  n.i1 = len;
  n.value = nodes_[a].value.segment(offset, len);
  return push(std::move(n));
}

Var Tape::scatter(Var a, int offset, int total) {
  Node n;
  n.op = Op::kScatter;
  n.parents = {a};
  n.i0 = offset;
  n.i1 = total;
  n.value = Vector::Zero(total);
  n.value.segment(offset, nodes_[a].value.size()) = nodes_[a].value;
  return push(std::move(n));
}

Var Tape::concat(const std::vector<Var>& parts) {
  Node n;
  n.op = Op::kConcat;
  n.parents = parts;
  Eigen::Index total = 0;
  for (Var p : parts) total += nodes_[p].value.size();
  n.value.resize(total);
  Eigen::Index pos = 0;
  for (Var p : parts) {
    n.value.segment(pos, nodes_[p].value.size()) = nodes_[p].value;
    pos += nodes_[p].value.size();
  }
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  Node n;
  n.op = Op::kSoftmax;
  n.parents = {a};
  n.value = softmax_value(nodes_[a].value);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.parents = {a};
  n.value = nodes_[a].value.cwiseMax(0.0);
  return push(std::move(n));
}

Var Tape::expv(Var a) {
  Node n;
  n.op = Op::kExp;
  n.parents = {a};
  n.value = nodes_[a].value.array().exp();
  return push(std::move(n));
}

Var Tape::matvec(std::shared_ptr<const Matrix> a, Var x, bool transpose) {
  Node n;
  n.op = Op::kMatvecConst;
  n.parents = {x};
  n.flag = transpose;
  n.value = transpose ? Vector(a->transpose() * nodes_[x].value)
                      : Vector(*a * nodes_[x].value);
  n.mat = std::move(a);
  return push(std::move(n));
}

Var Tape::matvec_param(Var w, int rows, int cols, Var x, bool transpose) {
  require(nodes_[w].value.size() == static_cast<Eigen::Index>(rows) * cols,
          "matvec_param: weight size mismatch");
  Node n;
  n.op = Op::kMatvecParam;
  n.parents = {w, x};
  n.i0 = rows;
  n.i1 = cols;
  n.flag = transpose;
  RowMajorMap m(nodes_[w].value.data(), rows, cols);
  n.value = transpose ? Vector(m.transpose() * nodes_[x].value)
                      : Vector(m * nodes_[x].value);
  return push(std::move(n));
}

Var Tape::outer_flat(Var a, Var b) {
  Node n;
  n.op = Op::kOuterFlat;
  n.parents = {a, b};
  const Vector& va = nodes_[a].value;
  const Vector& vb = nodes_[b].value;
  n.i0 = static_cast<int>(va.size());
  n.i1 = static_cast<int>(vb.size());
  n.value.resize(va.size() * vb.size());
  for (Eigen::Index i = 0; i < va.size(); ++i)
    n.value.segment(i * vb.size(), vb.size()) = va(i) * vb;
  return push(std::move(n));
}

Var Tape::custom(std::shared_ptr<const CustomOp> op, std::vector<Var> parents,
                 Vector value) {
  Node n;
  n.op = Op::kCustom;
  n.parents = std::move(parents);
  n.value = std::move(value);
  n.cop = std::move(op);
  return push(std::move(n));
}

Vector Tape::compute(const Node& n) const {
  auto pv = [&](int k) -> const Vector& { return nodes_[n.parents[k]].value; };
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      return n.value;
    case Op::kAdd: return pv(0) + pv(1);
    case Op::kSub: return pv(0) - pv(1);
    case Op::kScale: return n.c * pv(0);
    case Op::kSmul: return pv(0)(0) * pv(1);
    case Op::kCmul: return pv(0).cwiseProduct(n.cvec);
    case Op::kMul: return pv(0).cwiseProduct(pv(1));
    case Op::kDot: return Vector::Constant(1, pv(0).dot(pv(1)));
    case Op::kSum: return Vector::Constant(1, pv(0).sum());
    case Op::kBcast: return Vector::Constant(n.i0, pv(0)(0));
    case Op::kSegment: return pv(0).segment(n.i0, n.i1);
    case Op::kScatter: {
      Vector out = Vector::Zero(n.i1);
      out.segment(n.i0, pv(0).size()) = pv(0);
      return out;
    }
    case Op::kConcat: {
      Vector out(n.value.size());
      Eigen::Index pos = 0;
      for (size_t k = 0; k < n.parents.size(); ++k) {
        out.segment(pos, pv(static_cast<int>(k)).size()) =
            pv(static_cast<int>(k));
        pos += pv(static_cast<int>(k)).size();
      }
      return out;
    }
    case Op::kSoftmax: return softmax_value(pv(0));
    case Op::kRelu: return pv(0).cwiseMax(0.0);
    case Op::kExp: return pv(0).array().exp();
    case Op::kMatvecConst:
      return n.flag ? Vector(n.mat->transpose() * pv(0))
                    : Vector(*n.mat * pv(0));
    case Op::kMatvecParam: {
      RowMajorMap m(pv(0).data(), n.i0, n.i1);
      return n.flag ? Vector(m.transpose() * pv(1)) : Vector(m * pv(1));
    }
    case Op::kOuterFlat: {
      Vector out(pv(0).size() * pv(1).size());
      for (Eigen::Index i = 0; i < pv(0).size(); ++i)
        out.segment(i * pv(1).size(), pv(1).size()) = pv(0)(i) * pv(1);
      return out;
    }
    case Op::kCustom: {
      std::vector<Vector> parents;
      parents.reserve(n.parents.size());
      for (Var p : n.parents) parents.push_back(nodes_[p].value);
      return n.cop->forward(parents);
    }
  }
  throw std::invalid_argument("tape: unknown op");
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.op == Op::kLeaf || n.op == Op::kConst) continue;
    n.value = compute(n);
  }
}

void Tape::pullback(const Node& n, Var u,
                    std::vector<std::pair<Var, Var>>& contribs) {
  // Appending nodes may reallocate; `n` is a copy made by the caller.
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      return;
    case Op::kAdd:
      contribs.push_back({n.parents[0], u});
      contribs.push_back({n.parents[1], u});
      return;
    case Op::kSub:
      contribs.push_back({n.parents[0], u});
      contribs.push_back({n.parents[1], scale(u, -1.0)});
      return;
    case Op::kScale:
      contribs.push_back({n.parents[0], scale(u, n.c)});
      return;
    case Op::kSmul:
      contribs.push_back({n.parents[0], dot(u, n.parents[1])});
      contribs.push_back({n.parents[1], smul(n.parents[0], u)});
      return;
    case Op::kCmul:
      contribs.push_back({n.parents[0], cmul(u, n.cvec)});
      return;
    case Op::kMul:
      contribs.push_back({n.parents[0], mul(u, n.parents[1])});
      contribs.push_back({n.parents[1], mul(u, n.parents[0])});
      return;
    case Op::kDot:
      contribs.push_back({n.parents[0], smul(u, n.parents[1])});
      contribs.push_back({n.parents[1], smul(u, n.parents[0])});
      return;
    case Op::kSum:
      contribs.push_back(
          {n.parents[0], bcast(u, static_cast<int>(nodes_[n.parents[0]].value.size()))});
      return;
    case Op::kBcast:
      contribs.push_back({n.parents[0], sum(u)});
      return;
    case Op::kSegment:
      contribs.push_back(
          {n.parents[0],
           scatter(u, n.i0,
                   static_cast<int>(nodes_[n.parents[0]].value.size()))});
      return;
    case Op::kScatter:
      contribs.push_back(
          {n.parents[0],
           segment(u, n.i0,
                   static_cast<int>(nodes_[n.parents[0]].value.size()))});
      return;
    case Op::kConcat: {
      int pos = 0;
      for (Var p : n.parents) {
        const int len = static_cast<int>(nodes_[p].value.size());
        contribs.push_back({p, segment(u, pos, len)});
        pos += len;
      }
      return;
    }
    case Op::kSoftmax: {
      // J^T u = p .* u - (p . u) p, with p the recorded output node, so the
      // rule itself stays differentiable.
      const Var self = n.i0;  // stored at gradient time
      const Var t = mul(self, u);
      const Var s = sum(t);
      contribs.push_back({n.parents[0], sub(t, smul(s, self))});
      return;
    }
    case Op::kRelu: {
      const Vector& x = nodes_[n.parents[0]].value;
      Vector mask(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) mask(i) = x(i) > 0.0 ? 1.0 : 0.0;
      contribs.push_back({n.parents[0], cmul(u, mask)});
      return;
    }
    case Op::kExp: {
      const Var self = n.i0;
      contribs.push_back({n.parents[0], mul(u, self)});
      return;
    }
    case Op::kMatvecConst:
      contribs.push_back({n.parents[0], matvec(n.mat, u, !n.flag)});
      return;
    case Op::kMatvecParam: {
      const Var w = n.parents[0];
      const Var x = n.parents[1];
      if (!n.flag) {
        contribs.push_back({w, outer_flat(u, x)});
        contribs.push_back({x, matvec_param(w, n.i0, n.i1, u, true)});
      } else {
        contribs.push_back({w, outer_flat(x, u)});
        contribs.push_back({x, matvec_param(w, n.i0, n.i1, u, false)});
      }
      return;
    }
    case Op::kOuterFlat: {
      const Var a = n.parents[0];
      const Var b = n.parents[1];
      contribs.push_back({a, matvec_param(u, n.i0, n.i1, b, false)});
      contribs.push_back({b, matvec_param(u, n.i0, n.i1, a, true)});
      return;
    }
    case Op::kCustom: {
      const Var self = n.i0;
      n.cop->vjp(*this, self, u, contribs);
      return;
    }
  }
}

std::vector<Var> Tape::gradient(Var objective, const std::vector<Var>& targets) {
  require(objective >= 0 && objective < size(), "gradient: bad objective");
  require(nodes_[objective].value.size() == 1,
          "gradient: objective must be scalar");

  // Nodes that can reach a target by following parent edges.
  std::vector<char> reaches(objective + 1, 0);
  for (Var t : targets) {
    require(t >= 0 && t <= objective, "gradient: target outside subgraph");
    reaches[t] = 1;
  }
  for (Var id = 0; id <= objective; ++id) {
    if (reaches[id]) continue;
    for (Var p : nodes_[id].parents) {
      if (reaches[p]) {
        reaches[id] = 1;
        break;
      }
    }
  }

  std::vector<Var> adjoint(objective + 1, -1);
  adjoint[objective] = constant_scalar(1.0);

  std::vector<std::pair<Var, Var>> contribs;
  for (Var id = objective; id >= 0; --id) {
    if (adjoint[id] < 0 || !reaches[id]) continue;
    if (!nodes_[id].requires_grad && nodes_[id].op != Op::kLeaf) continue;
    Node copy = nodes_[id];
    copy.i0 = id;  // lets pullbacks reference the output node itself
    switch (copy.op) {
      case Op::kSoftmax:
      case Op::kExp:
      case Op::kCustom:
        break;
      default:
        copy.i0 = nodes_[id].i0;
    }
    contribs.clear();
    pullback(copy, adjoint[id], contribs);
    for (const auto& [parent, grad] : contribs) {
      if (!reaches[parent]) continue;
      if (!nodes_[parent].requires_grad) continue;
      adjoint[parent] = adjoint[parent] < 0 ? grad : add(adjoint[parent], grad);
    }
  }

  std::vector<Var> out;
  out.reserve(targets.size());
  for (Var t : targets) {
    if (adjoint[t] >= 0) {
      out.push_back(adjoint[t]);
    } else {
      out.push_back(constant(Vector::Zero(nodes_[t].value.size())));
    }
  }
  return out;
}

}  // namespace metapop
