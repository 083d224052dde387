/// @file tape.hpp
/// @brief Reverse-mode differentiation over whole-field primitives.
///
/// The tape records coarse-grained operations (per-cell maps, stencil
/// applications, masked reductions) on f64 buffers rather than per-scalar
/// nodes. Forward evaluation is eager; in non-recording mode the same builders
/// run as a plain evaluator, so simulated values and differentiated values
/// come from one code path and agree bitwise. Gradients are of the discrete
/// computation exactly (discretize-then-differentiate) and are checkable by
/// central finite differences.
///
/// Value-dependent selections (upwind side, min branches, sort permutations,
/// clamps) are captured at forward time and treated as locally constant in the
/// backward sweep; that is the a.e.-exact derivative of the piecewise-smooth
/// composite. Subgradient conventions: relu'(0)=0, abs'(0)=0, sqrt0'(0)=0.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "adpde/fields.hpp"

namespace adpde {

using Buf = std::vector<double>;
using BufPtr = std::shared_ptr<const Buf>;
using MaskPtr = std::shared_ptr<const std::vector<std::int8_t>>;
using PermPtr = std::shared_ptr<const std::vector<std::int32_t>>;

inline BufPtr make_buf(Buf&& b) { return std::make_shared<const Buf>(std::move(b)); }
inline BufPtr make_buf(const Buf& b) { return std::make_shared<const Buf>(b); }

/// Grid geometry the stencil kernels need (dims, spacing, strides).
struct Shape {
  int ndim = 2;
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  Shape() = default;
  explicit Shape(const Grid& g) : ndim(g.ndim()), dims(g.dims()), spacing(g.spacings()) {}

  std::int64_t cells() const {
    std::int64_t n = 1;
    for (int a = 0; a < ndim; ++a) n *= dims[a];
    return n;
  }
  std::int64_t stride(int axis) const {
    std::int64_t s = 1;
    for (int a = axis + 1; a < ndim; ++a) s *= dims[a];
    return s;
  }
};

/// Face handling for first-difference stencils.
enum class FaceRule : std::uint8_t {
  OneSided,  // fall back to the available one-sided difference
  Mirror,    // ghost cell mirrors the face cell (zero normal derivative)
};

// ---------------------------------------------------------------------------
// Stencil kernels (forward and transpose). All operate on flat buffers in the
// canonical storage order.
// ---------------------------------------------------------------------------
namespace kernels {

template <class Body>
inline void for_axis(const Shape& sh, int axis, Body&& body) {
  const std::int64_t n = sh.cells();
  const std::int64_t S = sh.stride(axis);
  const int N = sh.dims[axis];
  for (std::int64_t i = 0; i < n; ++i) {
    int pos = int((i / S) % N);
    body(i, pos, S, N);
  }
}

inline Buf diff_central(const Buf& x, const Shape& sh, int axis, FaceRule rule) {
  Buf out(x.size());
  const double inv2 = 1.0 / (2.0 * sh.spacing[axis]);
  const double inv1 = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    if (pos > 0 && pos < N - 1)
      out[i] = (x[i + S] - x[i - S]) * inv2;
    else if (pos == 0)
      out[i] = (x[i + S] - x[i]) * (rule == FaceRule::Mirror ? inv2 : inv1);
    else
      out[i] = (x[i] - x[i - S]) * (rule == FaceRule::Mirror ? inv2 : inv1);
  });
  return out;
}

inline void diff_central_adj(const Buf& g, Buf& ga, const Shape& sh, int axis,
                             FaceRule rule) {
  const double inv2 = 1.0 / (2.0 * sh.spacing[axis]);
  const double inv1 = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    if (pos > 0 && pos < N - 1) {
      ga[i + S] += g[i] * inv2;
      ga[i - S] -= g[i] * inv2;
    } else if (pos == 0) {
      double w = (rule == FaceRule::Mirror ? inv2 : inv1);
      ga[i + S] += g[i] * w;
      ga[i] -= g[i] * w;
    } else {
      double w = (rule == FaceRule::Mirror ? inv2 : inv1);
      ga[i] += g[i] * w;
      ga[i - S] -= g[i] * w;
    }
  });
}

/// Upwind first difference. mask[i] = +1 selects the backward difference
/// (flow from the negative side, V >= 0), -1 the forward difference.
inline Buf diff_upwind(const Buf& x, const Shape& sh, int axis,
                       const std::vector<std::int8_t>& mask, FaceRule rule) {
  Buf out(x.size());
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    bool backward = mask[i] >= 0;
    if (backward) {
      if (pos > 0)
        out[i] = (x[i] - x[i - S]) * inv;
      else
        out[i] = (rule == FaceRule::Mirror) ? 0.0 : (x[i + S] - x[i]) * inv;
    } else {
      if (pos < N - 1)
        out[i] = (x[i + S] - x[i]) * inv;
      else
        out[i] = (rule == FaceRule::Mirror) ? 0.0 : (x[i] - x[i - S]) * inv;
    }
  });
  return out;
}

inline void diff_upwind_adj(const Buf& g, Buf& ga, const Shape& sh, int axis,
                            const std::vector<std::int8_t>& mask, FaceRule rule) {
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    bool backward = mask[i] >= 0;
    if (backward) {
      if (pos > 0) {
        ga[i] += g[i] * inv;
        ga[i - S] -= g[i] * inv;
      } else if (rule != FaceRule::Mirror) {
        ga[i + S] += g[i] * inv;
        ga[i] -= g[i] * inv;
      }
    } else {
      if (pos < N - 1) {
        ga[i + S] += g[i] * inv;
        ga[i] -= g[i] * inv;
      } else if (rule != FaceRule::Mirror) {
        ga[i] += g[i] * inv;
        ga[i - S] -= g[i] * inv;
      }
    }
  });
}

/// Second difference, forward of backward: the standard [1,-2,1] stencil in
/// the interior; the missing one-sided difference at a face is zero (mirrored
/// ghost), giving (x1-x0)/dx^2 and (x_{N-2}-x_{N-1})/dx^2 at the faces.
inline Buf diff_second(const Buf& x, const Shape& sh, int axis) {
  Buf out(x.size());
  const double inv = 1.0 / (sh.spacing[axis] * sh.spacing[axis]);
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    if (pos > 0 && pos < N - 1)
      out[i] = (x[i + S] - 2.0 * x[i] + x[i - S]) * inv;
    else if (pos == 0)
      out[i] = (x[i + S] - x[i]) * inv;
    else
      out[i] = (x[i - S] - x[i]) * inv;
  });
  return out;
}

inline void diff_second_adj(const Buf& g, Buf& ga, const Shape& sh, int axis) {
  const double inv = 1.0 / (sh.spacing[axis] * sh.spacing[axis]);
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    if (pos > 0 && pos < N - 1) {
      ga[i + S] += g[i] * inv;
      ga[i] -= 2.0 * g[i] * inv;
      ga[i - S] += g[i] * inv;
    } else if (pos == 0) {
      ga[i + S] += g[i] * inv;
      ga[i] -= g[i] * inv;
    } else {
      ga[i - S] += g[i] * inv;
      ga[i] -= g[i] * inv;
    }
  });
}

/// Forward difference; zero at the top face (mirrored ghost).
inline Buf diff_forward(const Buf& x, const Shape& sh, int axis) {
  Buf out(x.size());
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    out[i] = (pos < N - 1) ? (x[i + S] - x[i]) * inv : 0.0;
  });
  return out;
}

inline void diff_forward_adj(const Buf& g, Buf& ga, const Shape& sh, int axis) {
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    if (pos < N - 1) {
      ga[i + S] += g[i] * inv;
      ga[i] -= g[i] * inv;
    }
  });
}

/// Backward difference; zero at the bottom face (mirrored ghost).
inline Buf diff_backward(const Buf& x, const Shape& sh, int axis) {
  Buf out(x.size());
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    (void)N;
    out[i] = (pos > 0) ? (x[i] - x[i - S]) * inv : 0.0;
  });
  return out;
}

inline void diff_backward_adj(const Buf& g, Buf& ga, const Shape& sh, int axis) {
  const double inv = 1.0 / sh.spacing[axis];
  for_axis(sh, axis, [&](std::int64_t i, int pos, std::int64_t S, int N) {
    (void)N;
    if (pos > 0) {
      ga[i] += g[i] * inv;
      ga[i - S] -= g[i] * inv;
    }
  });
}

}  // namespace kernels

/// Handle to a value on (or off) the tape. node < 0 marks a constant with no
/// gradient path.
struct Var {
  BufPtr v;
  int node = -1;

  std::int64_t size() const { return v ? std::int64_t(v->size()) : 0; }
  double scalar() const { return (*v)[0]; }
  const Buf& val() const { return *v; }
  bool tracked() const { return node >= 0; }
};

class Tape {
  enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddConst,
    Relu,
    Abs,
    Sqrt0,
    Min2,
    DiffC,
    DiffU,
    Diff2,
    DiffF,
    DiffB,
    Overwrite,
    SelectPerm,
    WSum,
  };

  struct Node {
    Op op;
    std::array<int, 3> in{-1, -1, -1};
    int nin = 0;
    BufPtr a, b;   // saved input values where backward needs them
    BufPtr out;    // saved output where backward needs it
    BufPtr wts;    // WSum weights
    MaskPtr mask;  // DiffU / Min2 / Overwrite
    PermPtr perm;  // SelectPerm
    double c = 0.0;
    int axis = 0;
    int k = 0;
    FaceRule rule = FaceRule::OneSided;
    std::int64_t out_size = 0;
  };

 public:
  explicit Tape(Shape shape, bool recording = true)
      : shape_(shape), recording_(recording) {}

  const Shape& shape() const { return shape_; }
  bool recording() const { return recording_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  /// A differentiable input. In non-recording mode it degrades to a constant.
  Var leaf(BufPtr v) {
    if (!recording_) return Var{std::move(v), -1};
    Node n;
    n.op = Op::Leaf;
    n.out_size = std::int64_t(v->size());
    int id = push(std::move(n));
    return Var{std::move(v), id};
  }
  Var leaf(Buf&& v) { return leaf(make_buf(std::move(v))); }
  Var leaf(const Buf& v) { return leaf(make_buf(v)); }

  static Var constant(BufPtr v) { return Var{std::move(v), -1}; }
  static Var constant(Buf&& v) { return Var{make_buf(std::move(v)), -1}; }
  static Var constant(const Buf& v) { return Var{make_buf(v), -1}; }
  static Var constant_scalar(double x) { return constant(Buf{x}); }

  Var add(const Var& a, const Var& b) { return binary(Op::Add, a, b); }
  Var sub(const Var& a, const Var& b) { return binary(Op::Sub, a, b); }
  Var mul(const Var& a, const Var& b) { return binary(Op::Mul, a, b); }
  Var div(const Var& a, const Var& b) { return binary(Op::Div, a, b); }

  Var scale(const Var& a, double c) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] * c;
    return unary(Op::Scale, a, std::move(out), c);
  }
  Var add_const(const Var& a, double c) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] + c;
    return unary(Op::AddConst, a, std::move(out), c);
  }
  Var neg(const Var& a) { return scale(a, -1.0); }

  Var relu(const Var& a) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (*a.v)[i] > 0.0 ? (*a.v)[i] : 0.0;
    return unary(Op::Relu, a, std::move(out), 0.0, /*save_input=*/true);
  }
  Var abs(const Var& a) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs((*a.v)[i]);
    return unary(Op::Abs, a, std::move(out), 0.0, /*save_input=*/true);
  }
  /// sqrt with subgradient 0 at (and within 1e-12 of) 0. Norm-of-difference
  /// terms built on this hit their cone tip with round-off-sized arguments at
  /// exact minima; central differences across a symmetric cone evaluate to
  /// ~0 there, and the dead zone makes the reverse sweep agree instead of
  /// amplifying the round-off direction by 1/|x|.
  Var sqrt0(const Var& a) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (*a.v)[i] > 0.0 ? std::sqrt((*a.v)[i]) : 0.0;
    Var r = unary(Op::Sqrt0, a, std::move(out));
    if (r.tracked()) nodes_[std::size_t(r.node)].out = r.v;
    return r;
  }

  Var min2(const Var& a, const Var& b) {
    std::vector<std::int8_t> mask(a.v->size());
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      bool take_a = (*a.v)[i] <= (*b.v)[i];
      mask[i] = take_a ? 1 : 0;
      out[i] = take_a ? (*a.v)[i] : (*b.v)[i];
    }
    Var r = binary_nosave(Op::Min2, a, b, std::move(out));
    if (r.tracked())
      nodes_[std::size_t(r.node)].mask =
          std::make_shared<const std::vector<std::int8_t>>(std::move(mask));
    return r;
  }

  Var diffc(const Var& a, int axis, FaceRule rule) {
    Var r = unary(Op::DiffC, a, kernels::diff_central(*a.v, shape_, axis, rule));
    stencil_aux(r, axis, rule);
    return r;
  }
  Var diffu(const Var& a, int axis, MaskPtr mask, FaceRule rule) {
    Var r = unary(Op::DiffU, a, kernels::diff_upwind(*a.v, shape_, axis, *mask, rule));
    if (r.tracked()) {
      stencil_aux(r, axis, rule);
      nodes_[std::size_t(r.node)].mask = std::move(mask);
    }
    return r;
  }
  Var diff2(const Var& a, int axis) {
    Var r = unary(Op::Diff2, a, kernels::diff_second(*a.v, shape_, axis));
    stencil_aux(r, axis, FaceRule::Mirror);
    return r;
  }
  Var difff(const Var& a, int axis) {
    Var r = unary(Op::DiffF, a, kernels::diff_forward(*a.v, shape_, axis));
    stencil_aux(r, axis, FaceRule::Mirror);
    return r;
  }
  Var diffb(const Var& a, int axis) {
    Var r = unary(Op::DiffB, a, kernels::diff_backward(*a.v, shape_, axis));
    stencil_aux(r, axis, FaceRule::Mirror);
    return r;
  }

  /// out = mask ? values : a. Dirichlet overwrite; no gradient flows into the
  /// overwritten cells.
  Var overwrite(const Var& a, const BufPtr& values, MaskPtr mask) {
    Buf out(a.v->size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = (*mask)[i] ? (*values)[i] : (*a.v)[i];
    Var r = unary(Op::Overwrite, a, std::move(out));
    if (r.tracked()) nodes_[std::size_t(r.node)].mask = std::move(mask);
    return r;
  }

  /// Scalar-valued weighted reduction: sum_i w[i] a[i] (fixed order).
  Var wsum(const Var& a, BufPtr weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.v->size(); ++i) s += (*weights)[i] * (*a.v)[i];
    Buf out{s};
    Var r = unary(Op::WSum, a, std::move(out));
    if (r.tracked()) nodes_[std::size_t(r.node)].wts = std::move(weights);
    return r;
  }
  Var mean(const Var& a) {
    Buf w(a.v->size(), 1.0 / double(a.v->size()));
    return wsum(a, make_buf(std::move(w)));
  }

  /// out[c] = inputs[perm[c*n + k]].v[c]; per-cell gather by a permutation
  /// captured at forward time (used to sort eigenvalue slots).
  Var select_perm(const std::vector<Var>& inputs, PermPtr perm, int k) {
    const int n = int(inputs.size());
    const std::size_t m = inputs[0].v->size();
    Buf out(m);
    for (std::size_t c = 0; c < m; ++c)
      out[c] = (*inputs[std::size_t((*perm)[c * std::size_t(n) + std::size_t(k)])].v)[c];
    if (!recording_) return constant(std::move(out));
    Node nd;
    nd.op = Op::SelectPerm;
    nd.nin = n;
    bool any = false;
    for (int i = 0; i < n; ++i) {
      nd.in[std::size_t(i)] = inputs[std::size_t(i)].node;
      any = any || inputs[std::size_t(i)].tracked();
    }
    if (!any) return constant(std::move(out));
    nd.perm = std::move(perm);
    nd.k = k;
    nd.out_size = std::int64_t(m);
    int id = push(std::move(nd));
    return Var{make_buf(std::move(out)), id};
  }

  /// Reverse sweep from a scalar result. Adjoints accumulate on every tracked
  /// node; read them back per leaf with adjoint().
  void backward(const Var& result) {
    require(recording_, "tape", "backward needs a recording tape");
    require(result.tracked() && result.size() == 1, "tape",
            "backward needs a tracked scalar");
    adj_.assign(nodes_.size(), Buf());
    touch(result.node);
    adj_[std::size_t(result.node)][0] = 1.0;
    for (int id = int(nodes_.size()) - 1; id >= 0; --id) {
      if (adj_[std::size_t(id)].empty()) continue;
      step_backward(id);
    }
  }

  /// Adjoint buffer of a leaf (empty if the leaf never influenced the result).
  Buf adjoint(const Var& leaf) const {
    if (!leaf.tracked() || adj_.empty() || adj_[std::size_t(leaf.node)].empty())
      return Buf(leaf.v->size(), 0.0);
    return adj_[std::size_t(leaf.node)];
  }

 private:
  int push(Node&& n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  void stencil_aux(Var& r, int axis, FaceRule rule) {
    if (!r.tracked()) return;
    nodes_[std::size_t(r.node)].axis = axis;
    nodes_[std::size_t(r.node)].rule = rule;
  }

  Var unary(Op op, const Var& a, Buf&& out, double c = 0.0, bool save_input = false) {
    BufPtr outp = make_buf(std::move(out));
    if (!recording_ || !a.tracked()) return Var{outp, -1};
    Node n;
    n.op = op;
    n.in[0] = a.node;
    n.nin = 1;
    n.c = c;
    n.out_size = std::int64_t(outp->size());
    if (save_input) n.a = a.v;
    int id = push(std::move(n));
    return Var{outp, id};
  }

  Var binary(Op op, const Var& a, const Var& b) {
    require(a.v->size() == b.v->size(), "tape", "operand size mismatch");
    Buf out(a.v->size());
    switch (op) {
      case Op::Add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] + (*b.v)[i];
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] - (*b.v)[i];
        break;
      case Op::Mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] * (*b.v)[i];
        break;
      case Op::Div:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a.v)[i] / (*b.v)[i];
        break;
      default:
        require(false, "tape", "bad binary op");
    }
    Var r = binary_nosave(op, a, b, std::move(out));
    if (r.tracked() && (op == Op::Mul || op == Op::Div)) {
      Node& n = nodes_[std::size_t(r.node)];
      n.a = a.v;
      n.b = b.v;
      if (op == Op::Div) n.out = r.v;
    }
    return r;
  }

  Var binary_nosave(Op op, const Var& a, const Var& b, Buf&& out) {
    BufPtr outp = make_buf(std::move(out));
    if (!recording_ || (!a.tracked() && !b.tracked())) return Var{outp, -1};
    Node n;
    n.op = op;
    n.in[0] = a.node;
    n.in[1] = b.node;
    n.nin = 2;
    n.out_size = std::int64_t(outp->size());
    int id = push(std::move(n));
    return Var{outp, id};
  }

  void touch(int id) {
    Buf& g = adj_[std::size_t(id)];
    if (g.empty()) g.assign(std::size_t(nodes_[std::size_t(id)].out_size), 0.0);
  }
  Buf* grad_of(int id) {
    if (id < 0) return nullptr;
    touch(id);
    return &adj_[std::size_t(id)];
  }

  void step_backward(int id) {
    const Node& n = nodes_[std::size_t(id)];
    const Buf& g = adj_[std::size_t(id)];
    Buf* ga = grad_of(n.in[0]);
    Buf* gb = n.nin > 1 ? grad_of(n.in[1]) : nullptr;
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (gb)
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
        break;
      case Op::Sub:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (gb)
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        break;
      case Op::Mul:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (*n.b)[i];
        if (gb)
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * (*n.a)[i];
        break;
      case Op::Div:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / (*n.b)[i];
        if (gb)
          for (std::size_t i = 0; i < g.size(); ++i)
            (*gb)[i] -= g[i] * (*n.out)[i] / (*n.b)[i];
        break;
      case Op::Scale:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * n.c;
        break;
      case Op::AddConst:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        break;
      case Op::Relu:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i)
            if ((*n.a)[i] > 0.0) (*ga)[i] += g[i];
        break;
      case Op::Abs:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) {
            double x = (*n.a)[i];
            if (x > 0.0)
              (*ga)[i] += g[i];
            else if (x < 0.0)
              (*ga)[i] -= g[i];
          }
        break;
      case Op::Sqrt0:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i) {
            double s = (*n.out)[i];
            if (s > 1e-12) (*ga)[i] += 0.5 * g[i] / s;
          }
        break;
      case Op::Min2:
        for (std::size_t i = 0; i < g.size(); ++i) {
          if ((*n.mask)[i]) {
            if (ga) (*ga)[i] += g[i];
          } else {
            if (gb) (*gb)[i] += g[i];
          }
        }
        break;
      case Op::DiffC:
        if (ga) kernels::diff_central_adj(g, *ga, shape_, n.axis, n.rule);
        break;
      case Op::DiffU:
        if (ga) kernels::diff_upwind_adj(g, *ga, shape_, n.axis, *n.mask, n.rule);
        break;
      case Op::Diff2:
        if (ga) kernels::diff_second_adj(g, *ga, shape_, n.axis);
        break;
      case Op::DiffF:
        if (ga) kernels::diff_forward_adj(g, *ga, shape_, n.axis);
        break;
      case Op::DiffB:
        if (ga) kernels::diff_backward_adj(g, *ga, shape_, n.axis);
        break;
      case Op::Overwrite:
        if (ga)
          for (std::size_t i = 0; i < g.size(); ++i)
            if (!(*n.mask)[i]) (*ga)[i] += g[i];
        break;
      case Op::SelectPerm: {
        const std::size_t nn = std::size_t(n.nin);
        for (std::size_t c = 0; c < g.size(); ++c) {
          int src = (*n.perm)[c * nn + std::size_t(n.k)];
          Buf* gs = grad_of(n.in[std::size_t(src)]);
          if (gs) (*gs)[c] += g[c];
        }
        break;
      }
      case Op::WSum:
        if (ga)
          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[0] * (*n.wts)[i];
        break;
    }
  }

  Shape shape_;
  bool recording_;
  std::vector<Node> nodes_;
  std::vector<Buf> adj_;
};

/// Upwind side selection recorded from the velocity sign (>= 0 -> backward).
inline MaskPtr upwind_mask(const Buf& v) {
  std::vector<std::int8_t> m(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] >= 0.0 ? 1 : -1;
  return std::make_shared<const std::vector<std::int8_t>>(std::move(m));
}

/// Per-cell permutation sorting the given channels descending (stable).
inline PermPtr sort_perm_desc(const std::vector<const Buf*>& chans) {
  const std::size_t n = chans.size();
  const std::size_t m = chans[0]->size();
  std::vector<std::int32_t> perm(n * m);
  for (std::size_t c = 0; c < m; ++c) {
    std::array<std::int32_t, 3> idx{0, 1, 2};
    // insertion sort on up to 3 entries, stable, descending
    for (std::size_t i = 1; i < n; ++i) {
      std::int32_t key = idx[i];
      double kv = (*chans[std::size_t(key)])[c];
      std::size_t j = i;
      while (j > 0 && (*chans[std::size_t(idx[j - 1])])[c] < kv) {
        idx[j] = idx[j - 1];
        --j;
      }
      idx[j] = key;
    }
    for (std::size_t k = 0; k < n; ++k) perm[c * n + k] = idx[k];
  }
  return std::make_shared<const std::vector<std::int32_t>>(std::move(perm));
}

}  // namespace adpde
