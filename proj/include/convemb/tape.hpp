#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "convemb/errors.hpp"
#include "convemb/matrix.hpp"

namespace convemb {

// Epsilon inside the distance square root; keeps the gradient finite at d -> 0.
inline constexpr double kDistanceEpsilon = 1e-12;

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double euclidean_distance(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s + kDistanceEpsilon);
}

inline double euclidean_distance(const Vector& a, const Vector& b) {
  require_same_length("euclidean_distance", a.size(), b.size());
  return euclidean_distance(a.data(), b.data(), a.size());
}

inline double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
  require_same_length("euclidean_distance", a.size(), b.size());
  return euclidean_distance(a.data(), b.data(), a.size());
}

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  const Tape* owner = nullptr;
  bool valid() const { return id >= 0; }
};

// Record of primitive ops applied during a forward pass. Values are computed
// eagerly; gradient_of replays the records in reverse. Single-threaded by
// contract; distinct tapes may run concurrently on shared immutable params.
class Tape {
  enum class Op : std::uint8_t {
    kLeaf,
    kAffine,       // in0=W, in1=x, in2=b (optional)
    kAdd,
    kSub,
    kTanh,
    kSigmoid,
    kHadamard,
    kMaskedSoftmax,   // aux = mask bits
    kWeightedSum,     // in0 = weights, aux = vector ids
    kDotStack,        // in0 = context, aux = vector ids
    kConcat2,
    kEuclid,
    kContrastive,     // in0 = distance; x0 = y, x1 = margin
    kPick,            // aux0 = index
    kScalarAdd,
    kScalarScale,     // x0 = factor
    kScalarMul,
  };

  struct Node {
    Op op;
    bool requires_grad;
    int rows, cols;
    std::size_t val;   // offset into vals_/grads_
    int in0, in1, in2;
    std::size_t aux;   // offset into ints_
    int naux;
    double x0, x1;
  };

 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Drops all records but keeps allocated capacity for reuse.
  void reset() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    ints_.clear();
  }

  std::size_t node_count() const { return nodes_.size(); }

  // ---- leaves ------------------------------------------------------------

  Var leaf(const Matrix& m, bool requires_grad = true) {
    Var v = make(Op::kLeaf, m.rows(), m.cols(), -1, -1, -1, requires_grad);
    std::copy(m.data(), m.data() + m.size(), vals_.data() + node(v).val);
    return v;
  }

  Var leaf(const Vector& x, bool requires_grad = true) {
    Var v = make(Op::kLeaf, x.size(), 1, -1, -1, -1, requires_grad);
    std::copy(x.data(), x.data() + x.size(), vals_.data() + node(v).val);
    return v;
  }

  Var leaf_span(const double* p, std::size_t rows, std::size_t cols, bool requires_grad = true) {
    Var v = make(Op::kLeaf, rows, cols, -1, -1, -1, requires_grad);
    std::copy(p, p + rows * cols, vals_.data() + node(v).val);
    return v;
  }

  Var zeros(std::size_t n) { return make(Op::kLeaf, n, 1, -1, -1, -1, false); }

  Var scalar(double x) {
    Var v = make(Op::kLeaf, 1, 1, -1, -1, -1, false);
    vals_[node(v).val] = x;
    return v;
  }

  // ---- primitive ops -----------------------------------------------------

  // y = W x + b. Records gradient rules for W, x and b.
  Var affine(Var w, Var x, Var b) {
    check_owned(w), check_owned(x), check_owned(b);
    const Node& nw = node(w);
    const Node& nx = node(x);
    const Node& nb = node(b);
    if (nx.cols != 1 || nb.cols != 1 || static_cast<std::size_t>(nw.cols) != vsize(x) ||
        vsize(b) != static_cast<std::size_t>(nw.rows)) {
      std::ostringstream os;
      os << "affine: shape mismatch, W=" << shape_str(nw.rows, nw.cols) << " x="
         << shape_str(nx.rows, nx.cols) << " b=" << shape_str(nb.rows, nb.cols);
      throw shape_error(os.str());
    }
    Var y = make(Op::kAffine, nw.rows, 1, w.id, x.id, b.id,
                 nw.requires_grad || nx.requires_grad || nb.requires_grad);
    matvec_forward(y, w, x, &b);
    return y;
  }

  // y = W x (no bias term)
  Var matvec(Var w, Var x) {
    check_owned(w), check_owned(x);
    const Node& nw = node(w);
    const Node& nx = node(x);
    if (nx.cols != 1 || static_cast<std::size_t>(nw.cols) != vsize(x)) {
      std::ostringstream os;
      os << "matvec: shape mismatch, W=" << shape_str(nw.rows, nw.cols) << " x="
         << shape_str(nx.rows, nx.cols);
      throw shape_error(os.str());
    }
    Var y = make(Op::kAffine, nw.rows, 1, w.id, x.id, -1,
                 nw.requires_grad || nx.requires_grad);
    matvec_forward(y, w, x, nullptr);
    return y;
  }

  Var add(Var a, Var b) { return binary_elementwise(Op::kAdd, a, b); }
  Var sub(Var a, Var b) { return binary_elementwise(Op::kSub, a, b); }
  Var hadamard(Var a, Var b) { return binary_elementwise(Op::kHadamard, a, b); }

  Var tanh(Var a) {
    check_owned(a);
    Var y = make(Op::kTanh, node(a).rows, node(a).cols, a.id, -1, -1, node(a).requires_grad);
    const double* pa = val_ptr(a);
    double* py = vals_.data() + node(y).val;
    for (std::size_t i = 0; i < vsize(a); ++i) py[i] = std::tanh(pa[i]);
    return y;
  }

  Var sigmoid(Var a) {
    check_owned(a);
    Var y = make(Op::kSigmoid, node(a).rows, node(a).cols, a.id, -1, -1, node(a).requires_grad);
    const double* pa = val_ptr(a);
    double* py = vals_.data() + node(y).val;
    for (std::size_t i = 0; i < vsize(a); ++i) py[i] = 1.0 / (1.0 + std::exp(-pa[i]));
    return y;
  }

  // Masked-out entries are exactly zero; the rest sum to one. Max-subtraction
  // keeps the exponentials in range.
  Var masked_softmax(Var logits, const std::vector<std::uint8_t>& mask) {
    check_owned(logits);
    if (mask.size() != vsize(logits)) {
      std::ostringstream os;
      os << "masked_softmax: mask length mismatch, logits=" << shape_str(node(logits).rows, 1)
         << " mask=" << shape_str(mask.size(), 1);
      throw shape_error(os.str());
    }
    std::size_t n = mask.size();
    double mx = -HUGE_VAL;
    std::size_t live = 0;
    {
      const double* pl = val_ptr(logits);
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++live;
        if (pl[i] > mx) mx = pl[i];
      }
    }
    if (live == 0) throw empty_attention_error("masked_softmax: all positions masked out");
    Var y = make(Op::kMaskedSoftmax, n, 1, logits.id, -1, -1, node(logits).requires_grad);
    std::size_t aux = push_ints(mask);
    nodes_.back().aux = aux;
    nodes_.back().naux = static_cast<int>(n);
    const double* pl = val_ptr(logits);
    double* py = vals_.data() + node(y).val;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      py[i] = mask[i] ? std::exp(pl[i] - mx) : 0.0;
      z += py[i];
    }
    for (std::size_t i = 0; i < n; ++i) py[i] /= z;
    return y;
  }

  // y = sum_j weights[j] * vectors[j]
  Var weighted_sum(Var weights, std::span<const Var> vectors) {
    check_owned(weights);
    if (vsize(weights) != vectors.size()) {
      std::ostringstream os;
      os << "weighted_sum: " << vsize(weights) << " weights vs " << vectors.size() << " vectors";
      throw shape_error(os.str());
    }
    if (vectors.empty()) throw value_error("weighted_sum: no vectors");
    std::size_t d = vsize(vectors[0]);
    bool req = node(weights).requires_grad;
    for (Var v : vectors) {
      check_owned(v);
      require_same_length("weighted_sum", d, vsize(v));
      req = req || node(v).requires_grad;
    }
    Var y = make(Op::kWeightedSum, d, 1, weights.id, -1, -1, req);
    std::size_t aux = push_ids(vectors);
    nodes_.back().aux = aux;
    nodes_.back().naux = static_cast<int>(vectors.size());
    double* py = vals_.data() + node(y).val;
    const double* pw = val_ptr(weights);
    for (std::size_t j = 0; j < vectors.size(); ++j) {
      const double* pv = val_ptr(vectors[j]);
      double wj = pw[j];
      for (std::size_t k = 0; k < d; ++k) py[k] += wj * pv[k];
    }
    return y;
  }

  // logits[j] = vectors[j] . context
  Var dot_stack(std::span<const Var> vectors, Var context) {
    check_owned(context);
    if (vectors.empty()) throw value_error("dot_stack: no vectors");
    std::size_t d = vsize(context);
    bool req = node(context).requires_grad;
    for (Var v : vectors) {
      check_owned(v);
      require_same_length("dot_stack", d, vsize(v));
      req = req || node(v).requires_grad;
    }
    Var y = make(Op::kDotStack, vectors.size(), 1, context.id, -1, -1, req);
    std::size_t aux = push_ids(vectors);
    nodes_.back().aux = aux;
    nodes_.back().naux = static_cast<int>(vectors.size());
    double* py = vals_.data() + node(y).val;
    const double* pc = val_ptr(context);
    for (std::size_t j = 0; j < vectors.size(); ++j) py[j] = dot(val_ptr(vectors[j]), pc, d);
    return y;
  }

  Var concat(Var a, Var b) {
    check_owned(a), check_owned(b);
    std::size_t na = vsize(a), nb = vsize(b);
    Var y = make(Op::kConcat2, na + nb, 1, a.id, b.id, -1,
                 node(a).requires_grad || node(b).requires_grad);
    double* py = vals_.data() + node(y).val;
    std::copy(val_ptr(a), val_ptr(a) + na, py);
    std::copy(val_ptr(b), val_ptr(b) + nb, py + na);
    return y;
  }

  // d = sqrt(sum (a-b)^2 + eps)
  Var euclidean(Var a, Var b) {
    check_owned(a), check_owned(b);
    require_same_length("euclidean_distance", vsize(a), vsize(b));
    Var y = make(Op::kEuclid, 1, 1, a.id, b.id, -1,
                 node(a).requires_grad || node(b).requires_grad);
    vals_[node(y).val] = euclidean_distance(val_ptr(a), val_ptr(b), vsize(a));
    return y;
  }

  // L = y/2 d^2 + (1-y)/2 max(0, m-d)^2, taking d as a recorded scalar.
  Var contrastive_from_distance(Var d, double y, double margin) {
    check_owned(d);
    if (vsize(d) != 1) throw shape_error("contrastive_from_distance: d must be scalar");
    if (y != 0.0 && y != 1.0) throw value_error("contrastive_from_distance: y must be 0 or 1");
    if (!(margin > 0.0)) throw value_error("contrastive_from_distance: margin must be > 0");
    Var l = make(Op::kContrastive, 1, 1, d.id, -1, -1, node(d).requires_grad);
    nodes_.back().x0 = y;
    nodes_.back().x1 = margin;
    double dv = vals_[node(d).val];
    double hinge = std::max(0.0, margin - dv);
    vals_[node(l).val] = 0.5 * y * dv * dv + 0.5 * (1.0 - y) * hinge * hinge;
    return l;
  }

  Var pick(Var v, std::size_t idx) {
    check_owned(v);
    if (idx >= vsize(v)) throw shape_error("pick: index out of range");
    Var y = make(Op::kPick, 1, 1, v.id, -1, -1, node(v).requires_grad);
    nodes_.back().naux = static_cast<int>(idx);
    vals_[node(y).val] = vals_[node(v).val + idx];
    return y;
  }

  Var scalar_add(Var a, Var b) {
    check_owned(a), check_owned(b);
    if (vsize(a) != 1 || vsize(b) != 1) throw shape_error("scalar_add: operands must be scalars");
    Var y = make(Op::kScalarAdd, 1, 1, a.id, b.id, -1,
                 node(a).requires_grad || node(b).requires_grad);
    vals_[node(y).val] = vals_[node(a).val] + vals_[node(b).val];
    return y;
  }

  Var scalar_scale(double c, Var a) {
    check_owned(a);
    if (vsize(a) != 1) throw shape_error("scalar_scale: operand must be scalar");
    Var y = make(Op::kScalarScale, 1, 1, a.id, -1, -1, node(a).requires_grad);
    nodes_.back().x0 = c;
    vals_[node(y).val] = c * vals_[node(a).val];
    return y;
  }

  Var scalar_mul(Var a, Var b) {
    check_owned(a), check_owned(b);
    if (vsize(a) != 1 || vsize(b) != 1) throw shape_error("scalar_mul: operands must be scalars");
    Var y = make(Op::kScalarMul, 1, 1, a.id, b.id, -1,
                 node(a).requires_grad || node(b).requires_grad);
    vals_[node(y).val] = vals_[node(a).val] * vals_[node(b).val];
    return y;
  }

  // ---- reading values ----------------------------------------------------

  std::size_t vsize(Var v) const {
    const Node& n = node(v);
    return static_cast<std::size_t>(n.rows) * static_cast<std::size_t>(n.cols);
  }

  const double* val_ptr(Var v) const { return vals_.data() + node(v).val; }

  double value_scalar(Var v) const {
    if (vsize(v) != 1) throw shape_error("value_scalar: not a scalar");
    return vals_[node(v).val];
  }

  std::vector<double> value(Var v) const {
    const double* p = val_ptr(v);
    return std::vector<double>(p, p + vsize(v));
  }

  // ---- reverse pass -------------------------------------------------------

  // Accumulates d(out)/d(node) for every recorded node; out must be scalar.
  void backward(Var out) {
    check_owned(out);
    if (vsize(out) != 1) throw value_error("gradient_of: output is not a scalar");
    grads_.assign(vals_.size(), 0.0);
    grads_[node(out).val] = 1.0;
    for (int id = out.id; id >= 0; --id) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad && n.op != Op::kLeaf) continue;
      backward_node(n);
    }
  }

  const double* grad_ptr(Var v) const { return grads_.data() + node(v).val; }

  std::vector<double> grad(Var v) const {
    const double* p = grad_ptr(v);
    return std::vector<double>(p, p + vsize(v));
  }

  // Gradients of a scalar output w.r.t. the given leaves. Leaves that never
  // fed into the output receive zeros.
  std::vector<std::vector<double>> gradient_of(Var out, std::span<const Var> leaves) {
    backward(out);
    std::vector<std::vector<double>> gs;
    gs.reserve(leaves.size());
    for (Var v : leaves) {
      check_owned(v);
      gs.push_back(grad(v));
    }
    return gs;
  }

 private:
  Var make(Op op, std::size_t rows, std::size_t cols, int in0, int in1, int in2, bool req) {
    Node n;
    n.op = op;
    n.requires_grad = req;
    n.rows = static_cast<int>(rows);
    n.cols = static_cast<int>(cols);
    n.val = vals_.size();
    n.in0 = in0;
    n.in1 = in1;
    n.in2 = in2;
    n.aux = 0;
    n.naux = 0;
    n.x0 = 0.0;
    n.x1 = 0.0;
    vals_.resize(vals_.size() + rows * cols, 0.0);
    nodes_.push_back(n);
    return Var{static_cast<int>(nodes_.size()) - 1, this};
  }

  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  void check_owned(Var v) const {
    if (!v.valid() || v.owner != this || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw value_error("tape: variable does not belong to the active tape");
  }

  std::size_t push_ints(const std::vector<std::uint8_t>& bits) {
    std::size_t off = ints_.size();
    for (std::uint8_t b : bits) ints_.push_back(b ? 1 : 0);
    return off;
  }

  std::size_t push_ids(std::span<const Var> vars) {
    std::size_t off = ints_.size();
    for (Var v : vars) ints_.push_back(v.id);
    return off;
  }

  void matvec_forward(Var y, Var w, Var x, const Var* b) {
    const Node& nw = node(w);
    std::size_t m = static_cast<std::size_t>(nw.rows), n = static_cast<std::size_t>(nw.cols);
    const double* pw = val_ptr(w);
    const double* px = val_ptr(x);
    double* py = vals_.data() + node(y).val;
    const double* pb = b ? val_ptr(*b) : nullptr;
    for (std::size_t i = 0; i < m; ++i) {
      py[i] = (pb ? pb[i] : 0.0) + dot(pw + i * n, px, n);
    }
  }

  Var binary_elementwise(Op op, Var a, Var b) {
    check_owned(a), check_owned(b);
    const char* name = op == Op::kAdd ? "add" : (op == Op::kSub ? "sub" : "hadamard");
    require_same_length(name, vsize(a), vsize(b));
    Var y = make(op, node(a).rows, node(a).cols, a.id, b.id, -1,
                 node(a).requires_grad || node(b).requires_grad);
    const double* pa = val_ptr(a);
    const double* pb = val_ptr(b);
    double* py = vals_.data() + node(y).val;
    std::size_t n = vsize(a);
    switch (op) {
      case Op::kAdd:
        for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] - pb[i];
        break;
      default:
        for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
        break;
    }
    return y;
  }

  bool wants_grad(int id) const { return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad; }

  void backward_node(const Node& n) {
    const double* g = grads_.data() + n.val;
    const double* y = vals_.data() + n.val;
    std::size_t sz = static_cast<std::size_t>(n.rows) * static_cast<std::size_t>(n.cols);
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        const Node& nw = nodes_[static_cast<std::size_t>(n.in0)];
        const Node& nx = nodes_[static_cast<std::size_t>(n.in1)];
        std::size_t m = static_cast<std::size_t>(nw.rows), k = static_cast<std::size_t>(nw.cols);
        const double* px = vals_.data() + nx.val;
        const double* pw = vals_.data() + nw.val;
        if (wants_grad(n.in0)) {
          double* gw = grads_.data() + nw.val;
          for (std::size_t i = 0; i < m; ++i) {
            double gi = g[i];
            double* grow = gw + i * k;
            for (std::size_t j = 0; j < k; ++j) grow[j] += gi * px[j];
          }
        }
        if (wants_grad(n.in1)) {
          double* gx = grads_.data() + nx.val;
          for (std::size_t i = 0; i < m; ++i) {
            double gi = g[i];
            const double* wrow = pw + i * k;
            for (std::size_t j = 0; j < k; ++j) gx[j] += gi * wrow[j];
          }
        }
        if (n.in2 >= 0 && wants_grad(n.in2)) {
          double* gb = grads_.data() + nodes_[static_cast<std::size_t>(n.in2)].val;
          for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + nodes_[static_cast<std::size_t>(n.in0)].val;
          for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        }
        if (wants_grad(n.in1)) {
          double* gb = grads_.data() + nodes_[static_cast<std::size_t>(n.in1)].val;
          double s = n.op == Op::kAdd ? 1.0 : -1.0;
          for (std::size_t i = 0; i < sz; ++i) gb[i] += s * g[i];
        }
        break;
      }
      case Op::kTanh:
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + nodes_[static_cast<std::size_t>(n.in0)].val;
          for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      case Op::kSigmoid:
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + nodes_[static_cast<std::size_t>(n.in0)].val;
          for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      case Op::kHadamard: {
        const Node& na = nodes_[static_cast<std::size_t>(n.in0)];
        const Node& nb = nodes_[static_cast<std::size_t>(n.in1)];
        const double* pa = vals_.data() + na.val;
        const double* pb = vals_.data() + nb.val;
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + na.val;
          for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * pb[i];
        }
        if (wants_grad(n.in1)) {
          double* gb = grads_.data() + nb.val;
          for (std::size_t i = 0; i < sz; ++i) gb[i] += g[i] * pa[i];
        }
        break;
      }
      case Op::kMaskedSoftmax: {
        if (!wants_grad(n.in0)) break;
        double s = 0.0;
        for (std::size_t i = 0; i < sz; ++i) s += g[i] * y[i];
        double* gl = grads_.data() + nodes_[static_cast<std::size_t>(n.in0)].val;
        const int* mask = ints_.data() + n.aux;
        for (std::size_t i = 0; i < sz; ++i) {
          if (mask[i]) gl[i] += y[i] * (g[i] - s);
        }
        break;
      }
      case Op::kWeightedSum: {
        const Node& nw = nodes_[static_cast<std::size_t>(n.in0)];
        const double* pw = vals_.data() + nw.val;
        double* gw = wants_grad(n.in0) ? grads_.data() + nw.val : nullptr;
        const int* ids = ints_.data() + n.aux;
        for (int j = 0; j < n.naux; ++j) {
          const Node& nv = nodes_[static_cast<std::size_t>(ids[j])];
          const double* pv = vals_.data() + nv.val;
          if (gw) gw[j] += dot(g, pv, sz);
          if (wants_grad(ids[j])) {
            double* gv = grads_.data() + nv.val;
            double wj = pw[j];
            for (std::size_t k = 0; k < sz; ++k) gv[k] += wj * g[k];
          }
        }
        break;
      }
      case Op::kDotStack: {
        const Node& nc = nodes_[static_cast<std::size_t>(n.in0)];
        const double* pc = vals_.data() + nc.val;
        double* gc = wants_grad(n.in0) ? grads_.data() + nc.val : nullptr;
        std::size_t d = static_cast<std::size_t>(nc.rows);
        const int* ids = ints_.data() + n.aux;
        for (int j = 0; j < n.naux; ++j) {
          const Node& nv = nodes_[static_cast<std::size_t>(ids[j])];
          const double* pv = vals_.data() + nv.val;
          double gj = g[j];
          if (wants_grad(ids[j])) {
            double* gv = grads_.data() + nv.val;
            for (std::size_t k = 0; k < d; ++k) gv[k] += gj * pc[k];
          }
          if (gc) {
            for (std::size_t k = 0; k < d; ++k) gc[k] += gj * pv[k];
          }
        }
        break;
      }
      case Op::kConcat2: {
        const Node& na = nodes_[static_cast<std::size_t>(n.in0)];
        std::size_t ra = static_cast<std::size_t>(na.rows);
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + na.val;
          for (std::size_t i = 0; i < ra; ++i) ga[i] += g[i];
        }
        if (wants_grad(n.in1)) {
          double* gb = grads_.data() + nodes_[static_cast<std::size_t>(n.in1)].val;
          for (std::size_t i = ra; i < sz; ++i) gb[i - ra] += g[i];
        }
        break;
      }
      case Op::kEuclid: {
        const Node& na = nodes_[static_cast<std::size_t>(n.in0)];
        const Node& nb = nodes_[static_cast<std::size_t>(n.in1)];
        const double* pa = vals_.data() + na.val;
        const double* pb = vals_.data() + nb.val;
        double coef = g[0] / y[0];
        std::size_t d = static_cast<std::size_t>(na.rows);
        if (wants_grad(n.in0)) {
          double* ga = grads_.data() + na.val;
          for (std::size_t i = 0; i < d; ++i) ga[i] += coef * (pa[i] - pb[i]);
        }
        if (wants_grad(n.in1)) {
          double* gb = grads_.data() + nb.val;
          for (std::size_t i = 0; i < d; ++i) gb[i] -= coef * (pa[i] - pb[i]);
        }
        break;
      }
      case Op::kContrastive: {
        if (!wants_grad(n.in0)) break;
        const Node& nd = nodes_[static_cast<std::size_t>(n.in0)];
        double d = vals_[nd.val];
        // subgradient 0 at the hinge kink d == m
        double dl_dd = n.x0 * d - (1.0 - n.x0) * std::max(0.0, n.x1 - d);
        grads_[nd.val] += g[0] * dl_dd;
        break;
      }
      case Op::kPick:
        if (wants_grad(n.in0)) {
          grads_[nodes_[static_cast<std::size_t>(n.in0)].val + n.naux] += g[0];
        }
        break;
      case Op::kScalarAdd:
        if (wants_grad(n.in0)) grads_[nodes_[static_cast<std::size_t>(n.in0)].val] += g[0];
        if (wants_grad(n.in1)) grads_[nodes_[static_cast<std::size_t>(n.in1)].val] += g[0];
        break;
      case Op::kScalarScale:
        if (wants_grad(n.in0)) grads_[nodes_[static_cast<std::size_t>(n.in0)].val] += n.x0 * g[0];
        break;
      case Op::kScalarMul: {
        double a = vals_[nodes_[static_cast<std::size_t>(n.in0)].val];
        double b = vals_[nodes_[static_cast<std::size_t>(n.in1)].val];
        if (wants_grad(n.in0)) grads_[nodes_[static_cast<std::size_t>(n.in0)].val] += g[0] * b;
        if (wants_grad(n.in1)) grads_[nodes_[static_cast<std::size_t>(n.in1)].val] += g[0] * a;
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<int> ints_;
};

}  // namespace convemb
