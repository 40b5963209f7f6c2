#include "mgvae/ops.hpp"

#include "mgvae/error.hpp"

#include <cmath>
#include <memory>

namespace mgvae::ad {

namespace {

using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_graph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) throw ShapeError(op, "operands belong to different graphs");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_graph(a, b, op);
  if (a.value().shape() != b.value().shape()) {
    throw ShapeError(op, shape_string(a.value()) + " vs " + shape_string(b.value()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul", shape_string(av) + " x " + shape_string(bv));
  }
  Tensor out(av.rows(), bv.cols());
  out.map().noalias() = av.map() * bv.map();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map().noalias() += gy.map() * g.value(b).map().transpose();
    if (g.requires_grad(b)) g.grad_buffer(b).map().noalias() += g.value(a).map().transpose() * gy.map();
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt", shape_string(av) + " x " + shape_string(bv) + "^T");
  }
  Tensor out(av.rows(), bv.rows());
  out.map().noalias() = av.map() * bv.map().transpose();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map().noalias() += gy.map() * g.value(b).map();
    if (g.requires_grad(b)) g.grad_buffer(b).map().noalias() += gy.map().transpose() * g.value(a).map();
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map() + b.value().map();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map() += gy.map();
    if (g.requires_grad(b)) g.grad_buffer(b).map() += gy.map();
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map() - b.value().map();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map() += gy.map();
    if (g.requires_grad(b)) g.grad_buffer(b).map() -= gy.map();
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().cwiseProduct(b.value().map());
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map() += gy.map().cwiseProduct(g.value(b).map());
    if (g.requires_grad(b)) g.grad_buffer(b).map() += gy.map().cwiseProduct(g.value(a).map());
  });
}

Var add_row(Var a, Var row) {
  require_same_graph(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row", shape_string(av) + " + row " + shape_string(rv));
  }
  Tensor out(av.rows(), av.cols());
  out.map() = av.map().rowwise() + rv.map().row(0);
  return a.graph().record(std::move(out), {a, row}, [a, row](Graph& g, const Tensor&, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_buffer(a).map() += gy.map();
    if (g.requires_grad(row)) g.grad_buffer(row).map() += gy.map().colwise().sum();
  });
}

Var scale(Var a, Real s) {
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map() * s;
  return a.graph().record(std::move(out), {a}, [a, s](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map() += gy.map() * s;
  });
}

Var add_scalar(Var a, Real s) {
  Tensor out(a.rows(), a.cols());
  out.map() = a.value().map().array() + s;
  return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map() += gy.map();
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_same_graph(parts[0], p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols", "row mismatch " + shape_string(parts[0].value()) + " vs " +
                                          shape_string(p.value()));
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    out.map().middleCols(at, p.cols()) = p.value().map();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), parts, [inputs](Graph& g, const Tensor&, const Tensor& gy) {
    std::size_t at = 0;
    for (const auto& p : inputs) {
      const auto w = g.value(p).cols();
      if (g.requires_grad(p)) g.grad_buffer(p).map() += gy.map().middleCols(at, w);
      at += w;
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows", "no operands");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_same_graph(parts[0], p, "concat_rows");
    if (p.cols() != cols) {
      throw ShapeError("concat_rows", "column mismatch " + shape_string(parts[0].value()) +
                                          " vs " + shape_string(p.value()));
    }
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    out.map().middleRows(at, p.rows()) = p.value().map();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), parts, [inputs](Graph& g, const Tensor&, const Tensor& gy) {
    std::size_t at = 0;
    for (const auto& p : inputs) {
      const auto h = g.value(p).rows();
      if (g.requires_grad(p)) g.grad_buffer(p).map() += gy.map().middleRows(at, h);
      at += h;
    }
  });
}

Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  if (count == 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols", "columns [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") of " +
                                       shape_string(a.value()));
  }
  Tensor out(a.rows(), count);
  out.map() = a.value().map().middleCols(start, count);
  return a.graph().record(std::move(out), {a}, [a, start, count](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map().middleCols(start, count) += gy.map();
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  if (count == 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows", "rows [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") of " +
                                       shape_string(a.value()));
  }
  Tensor out(count, a.cols());
  out.map() = a.value().map().middleRows(start, count);
  return a.graph().record(std::move(out), {a}, [a, start, count](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map().middleRows(start, count) += gy.map();
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> indices) {
  const Tensor& av = a.value();
  if (indices.empty()) throw ShapeError("gather_rows", "empty index list");
  Tensor out(indices.size(), av.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows()) {
      throw ShapeError("gather_rows", "row index " + std::to_string(indices[i]) + " out of " +
                                          shape_string(av));
    }
    out.map().row(i) = av.map().row(indices[i]);
  }
  std::vector<std::uint32_t> idx(indices.begin(), indices.end());
  return a.graph().record(std::move(out), {a}, [a, idx = std::move(idx)](Graph& g, const Tensor&, const Tensor& gy) {
    auto gx = g.grad_buffer(a).map();
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += gy.map().row(i);
  });
}

Var segment_mean(Var a, std::span<const Interval> intervals) {
  const Tensor& av = a.value();
  if (intervals.empty()) throw ShapeError("segment_mean", "no intervals");
  Tensor out(intervals.size(), av.cols());
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& iv = intervals[k];
    if (iv.end <= iv.begin || iv.end > av.rows()) {
      throw ShapeError("segment_mean", "interval [" + std::to_string(iv.begin) + ", " +
                                           std::to_string(iv.end) + ") invalid for " +
                                           shape_string(av));
    }
    // Incremental mean: a run of identical rows reproduces that row exactly.
    auto m = out.map().row(k);
    m = av.map().row(iv.begin);
    for (std::uint32_t t = iv.begin + 1; t < iv.end; ++t) {
      m += (av.map().row(t) - m) / static_cast<Real>(t - iv.begin + 1);
    }
  }
  std::vector<Interval> ivs(intervals.begin(), intervals.end());
  return a.graph().record(std::move(out), {a}, [a, ivs = std::move(ivs)](Graph& g, const Tensor&, const Tensor& gy) {
    auto gx = g.grad_buffer(a).map();
    for (std::size_t k = 0; k < ivs.size(); ++k) {
      const Real w = Real(1) / ivs[k].length();
      for (auto t = ivs[k].begin; t < ivs[k].end; ++t) gx.row(t) += gy.map().row(k) * w;
    }
  });
}

namespace {

// Elementwise op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Var elementwise(Var a, F f, D dydx) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(std::move(y), {a}, [a, dydx](Graph& g, const Tensor& y, const Tensor& gy) {
    const Tensor& x = g.value(a);
    Tensor& gx = g.grad_buffer(a);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dydx(x[i], y[i]);
  });
}

Real logistic(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

}  // namespace

Var tanh(Var a) {
  return elementwise(a, [](Real x) { return std::tanh(x); },
                     [](Real, Real y) { return Real(1) - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(a, logistic, [](Real, Real y) { return y * (Real(1) - y); });
}

Var exp(Var a) {
  return elementwise(a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Var log(Var a) {
  for (auto v : a.value().values()) {
    if (!(v > 0)) throw ShapeError("log", "non-positive input " + std::to_string(v));
  }
  return elementwise(a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

Var square(Var a) {
  return elementwise(a, [](Real x) { return x * x; }, [](Real x, Real) { return 2 * x; });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().map().sum());
  return a.graph().record(std::move(out), {a}, [a](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map().array() += gy[0];
  });
}

Var mean(Var a) {
  const Real n = static_cast<Real>(a.value().size());
  Tensor out = Tensor::scalar(a.value().map().sum() / n);
  return a.graph().record(std::move(out), {a}, [a, n](Graph& g, const Tensor&, const Tensor& gy) {
    g.grad_buffer(a).map().array() += gy[0] / n;
  });
}

Var stop_gradient(Var a) { return a.graph().constant(a.value()); }

namespace {

struct LstmCache {
  RowMat gates;   // [T,4H] activated i, f, g, o
  RowMat cell;    // [T,H]
  RowMat tanh_c;  // [T,H]
  RowMat h_prev;  // [T,H] hidden state entering each frame's step
  RowMat c_prev;  // [T,H]
};

}  // namespace

Var lstm_sequence(Var gates_x, Var w_h, bool reverse, const LstmInitial& initial) {
  require_same_graph(gates_x, w_h, "lstm_sequence");
  const Tensor& gx = gates_x.value();
  const Tensor& wh = w_h.value();
  const std::size_t hidden = wh.cols();
  const std::size_t frames = gx.rows();
  if (wh.rows() != 4 * hidden || gx.cols() != 4 * hidden || frames == 0) {
    throw ShapeError("lstm_sequence", "gates " + shape_string(gx) + ", recurrent weight " +
                                          shape_string(wh));
  }
  for (const auto* s : {&initial.h, &initial.c}) {
    if (*s && ((*s)->rows() != 1 || (*s)->cols() != hidden)) {
      throw ShapeError("lstm_sequence", "initial state " + shape_string((*s)->value()) +
                                            " for hidden size " + std::to_string(hidden));
    }
  }

  const auto H = static_cast<Eigen::Index>(hidden);
  auto cache = std::make_shared<LstmCache>();
  cache->gates.resize(frames, 4 * H);
  cache->cell.resize(frames, H);
  cache->tanh_c.resize(frames, H);
  cache->h_prev.resize(frames, H);
  cache->c_prev.resize(frames, H);

  RowVec h = initial.h ? RowVec(initial.h->value().map().row(0)) : RowVec::Zero(H);
  RowVec c = initial.c ? RowVec(initial.c->value().map().row(0)) : RowVec::Zero(H);
  RowVec a(4 * H);
  Tensor out(frames, hidden);
  const auto wh_map = wh.map();
  const auto gx_map = gx.map();
  for (std::size_t s = 0; s < frames; ++s) {
    const std::size_t t = reverse ? frames - 1 - s : s;
    cache->h_prev.row(t) = h;
    cache->c_prev.row(t) = c;
    a.noalias() = gx_map.row(t) + h * wh_map.transpose();
    // tanh(x) = 2 sigmoid(2x) - 1 lets every gate share one vectorized exp.
    a.segment(2 * H, H) *= 2;
    auto gates = cache->gates.row(t);
    gates = ((-a).array().exp() + 1).inverse().matrix();
    gates.segment(2 * H, H) = (2 * gates.segment(2 * H, H).array() - 1).matrix();
    c = gates.segment(H, H).cwiseProduct(c) + gates.segment(0, H).cwiseProduct(gates.segment(2 * H, H));
    cache->cell.row(t) = c;
    auto tc = cache->tanh_c.row(t);
    tc = (2 / ((-2 * c).array().exp() + 1) - 1).matrix();
    h = gates.segment(3 * H, H).cwiseProduct(tc);
    out.map().row(t) = h;
  }

  std::vector<Var> inputs{gates_x, w_h};
  if (initial.h) inputs.push_back(*initial.h);
  if (initial.c) inputs.push_back(*initial.c);
  const std::optional<Var> h0 = initial.h;
  const std::optional<Var> c0 = initial.c;
  return gates_x.graph().record(
      std::move(out), inputs,
      [gates_x, w_h, h0, c0, cache, reverse, frames, H](Graph& g, const Tensor&, const Tensor& gy) {
        RowMat d_gates(frames, 4 * H);
        RowVec dh_carry = RowVec::Zero(H);
        RowVec dc_carry = RowVec::Zero(H);
        RowVec dh(H), dc(H);
        const auto wh_map = g.value(w_h).map();
        const auto gy_map = gy.map();
        for (std::size_t s = frames; s-- > 0;) {
          const std::size_t t = reverse ? frames - 1 - s : s;
          const auto gates = cache->gates.row(t);
          const auto i = gates.segment(0, H).array();
          const auto f = gates.segment(H, H).array();
          const auto gg = gates.segment(2 * H, H).array();
          const auto o = gates.segment(3 * H, H).array();
          const auto tc = cache->tanh_c.row(t).array();
          dh = gy_map.row(t) + dh_carry;
          dc = dc_carry.array() + dh.array() * o * (1 - tc * tc);
          auto da = d_gates.row(t);
          da.segment(0, H) = (dc.array() * gg * i * (1 - i)).matrix();
          da.segment(H, H) = (dc.array() * cache->c_prev.row(t).array() * f * (1 - f)).matrix();
          da.segment(2 * H, H) = (dc.array() * i * (1 - gg * gg)).matrix();
          da.segment(3 * H, H) = (dh.array() * tc * o * (1 - o)).matrix();
          dc_carry = (dc.array() * f).matrix();
          dh_carry.noalias() = da * wh_map;
        }
        if (g.requires_grad(gates_x)) g.grad_buffer(gates_x).map() += d_gates;
        if (g.requires_grad(w_h)) g.grad_buffer(w_h).map().noalias() += d_gates.transpose() * cache->h_prev;
        if (h0 && g.requires_grad(*h0)) g.grad_buffer(*h0).map().row(0) += dh_carry;
        if (c0 && g.requires_grad(*c0)) g.grad_buffer(*c0).map().row(0) += dc_carry;
      });
}

}  // namespace mgvae::ad
