#include "hlgt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace hlgt {

namespace {

template <class S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
}

template <class S>
bool tracked(const TensorT<S>& t) {
  return t.requires_grad();
}

template <class S, class Backward>
void maybe_record(const char* op, TensorT<S>& out, bool any_tracked, Backward&& bw) {
  auto* tape = TapeT<S>::current();
  if (!tape || !any_tracked) return;
  out.set_requires_grad(true);
  tape->mark_output(out);
  tape->record(op, std::forward<Backward>(bw));
}

// Shared scaffold for unary element-wise ops: fn fills value and local
// derivative, the recorded closure applies the chain rule.
template <class S, class Fn>
TensorT<S> unary_op(const char* op, const TensorT<S>& x, Fn&& fn) {
  TensorT<S> out(x.rows(), x.cols());
  const auto& xv = x.values();
  auto& ov = out.values();
  std::vector<S> deriv(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) fn(xv[i], ov[i], deriv[i]);
  check_finite(out, op);
  maybe_record(op, out, tracked(x), [x = x, out = out, d = std::move(deriv)]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& xg = x.grad();
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += og[i] * d[i];
  });
  return out;
}

}  // namespace

template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ, " + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()));
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<S> out(m, n);
  const S* av = a.values().data();
  const S* bv = b.values().data();
  S* ov = out.values().data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const S aip = av[i * k + p];
      if (aip == S(0)) continue;
      const S* brow = bv + p * n;
      S* orow = ov + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  check_finite(out, "matmul");
  maybe_record("matmul", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const int64_t m2 = a.rows(), k2 = a.cols(), n2 = b.cols();
    if (a.requires_grad()) {
      auto& ag = a.grad();
      const auto& bv2 = b.values();
      for (int64_t i = 0; i < m2; ++i)
        for (int64_t p = 0; p < k2; ++p) {
          S acc = S(0);
          for (int64_t j = 0; j < n2; ++j) acc += og[i * n2 + j] * bv2[p * n2 + j];
          ag[i * k2 + p] += acc;
        }
    }
    if (b.requires_grad()) {
      auto& bg = b.grad();
      const auto& av2 = a.values();
      for (int64_t i = 0; i < m2; ++i)
        for (int64_t p = 0; p < k2; ++p) {
          const S aip = av2[i * k2 + p];
          if (aip == S(0)) continue;
          for (int64_t j = 0; j < n2; ++j) bg[p * n2 + j] += aip * og[i * n2 + j];
        }
    }
  });
  return out;
}

template <class S>
TensorT<S> transpose(const TensorT<S>& x) {
  TensorT<S> out(x.cols(), x.rows());
  for (int64_t r = 0; r < x.rows(); ++r)
    for (int64_t c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
  maybe_record("transpose", out, tracked(x), [x = x, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& xg = x.grad();
    const int64_t r = x.rows(), c = x.cols();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) xg[i * c + j] += og[j * r + i];
  });
  return out;
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "add");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  check_finite(out, "add");
  maybe_record("add", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "sub");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  check_finite(out, "sub");
  maybe_record("sub", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= og[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "mul");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  check_finite(out, "mul");
  maybe_record("mul", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& av2 = a.values();
    const auto& bv2 = b.values();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bv2[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * av2[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> div(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "div");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
  check_finite(out, "div");
  maybe_record("div", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& av2 = a.values();
    const auto& bv2 = b.values();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] / bv2[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i)
        g[i] -= og[i] * av2[i] / (bv2[i] * bv2[i]);
    }
  });
  return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& x, S c) {
  TensorT<S> out(x.rows(), x.cols());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * c;
  check_finite(out, "scale");
  maybe_record("scale", out, tracked(x), [x = x, out = out, c]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& g = x.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * c;
  });
  return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& x, S c) {
  TensorT<S> out(x.rows(), x.cols());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + c;
  check_finite(out, "add_scalar");
  maybe_record("add_scalar", out, tracked(x), [x = x, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& g = x.grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
  });
  return out;
}

template <class S>
TensorT<S> add_row_bias(const TensorT<S>& x, const TensorT<S>& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw ShapeError("add_row_bias: bias must be 1x" + std::to_string(x.cols()) +
                     ", got " + std::to_string(bias.rows()) + "x" +
                     std::to_string(bias.cols()));
  TensorT<S> out(x.rows(), x.cols());
  const auto& xv = x.values();
  const auto& bv = bias.values();
  auto& ov = out.values();
  const int64_t n = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r)
    for (int64_t c = 0; c < n; ++c) ov[r * n + c] = xv[r * n + c] + bv[c];
  check_finite(out, "add_row_bias");
  maybe_record("add_row_bias", out, tracked(x) || tracked(bias), [x = x, bias = bias, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const int64_t n2 = x.cols();
    if (x.requires_grad()) {
      auto& g = x.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    }
    if (bias.requires_grad()) {
      auto& g = bias.grad();
      for (int64_t r = 0; r < x.rows(); ++r)
        for (int64_t c = 0; c < n2; ++c) g[c] += og[r * n2 + c];
    }
  });
  return out;
}

template <class S>
TensorT<S> repeat_row(const TensorT<S>& v, int64_t n) {
  if (v.rows() != 1) throw ShapeError("repeat_row: input must be a 1xD row");
  if (n < 1) throw ShapeError("repeat_row: count must be positive");
  TensorT<S> out(n, v.cols());
  const auto& vv = v.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < n; ++r)
    std::copy(vv.begin(), vv.end(), ov.begin() + r * v.cols());
  maybe_record("repeat_row", out, tracked(v), [v = v, out = out, n]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& g = v.grad();
    const int64_t d = v.cols();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t c = 0; c < d; ++c) g[c] += og[r * d + c];
  });
  return out;
}

template <class S>
TensorT<S> scale_by(const TensorT<S>& x, const TensorT<S>& s) {
  if (s.size() != 1) throw ShapeError("scale_by: scale must be a 1x1 tensor");
  TensorT<S> out(x.rows(), x.cols());
  const S sv = s.item();
  const auto& xv = x.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * sv;
  check_finite(out, "scale_by");
  maybe_record("scale_by", out, tracked(x) || tracked(s), [x = x, s = s, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    if (x.requires_grad()) {
      auto& g = x.grad();
      const S sv2 = s.item();
      for (size_t i = 0; i < g.size(); ++i) g[i] += og[i] * sv2;
    }
    if (s.requires_grad()) {
      const auto& xv2 = x.values();
      S acc = S(0);
      for (size_t i = 0; i < xv2.size(); ++i) acc += og[i] * xv2[i];
      s.grad()[0] += acc;
    }
  });
  return out;
}

template <class S>
TensorT<S> sum(const TensorT<S>& x) {
  S acc = S(0);
  for (S v : x.values()) acc += v;
  TensorT<S> out = TensorT<S>::scalar(acc);
  check_finite(out, "sum");
  maybe_record("sum", out, tracked(x), [x = x, out = out]() mutable {
    if (!out.has_grad()) return;
    const S g = out.grad()[0];
    auto& xg = x.grad();
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += g;
  });
  return out;
}

template <class S>
TensorT<S> mean(const TensorT<S>& x) {
  S acc = S(0);
  for (S v : x.values()) acc += v;
  const S inv = S(1) / static_cast<S>(x.size());
  TensorT<S> out = TensorT<S>::scalar(acc * inv);
  check_finite(out, "mean");
  maybe_record("mean", out, tracked(x), [x = x, out = out, inv]() mutable {
    if (!out.has_grad()) return;
    const S g = out.grad()[0] * inv;
    auto& xg = x.grad();
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += g;
  });
  return out;
}

template <class S>
TensorT<S> row_sums(const TensorT<S>& x) {
  TensorT<S> out(x.rows(), 1);
  const auto& xv = x.values();
  const int64_t n = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r) {
    S acc = S(0);
    for (int64_t c = 0; c < n; ++c) acc += xv[r * n + c];
    out.at(r, 0) = acc;
  }
  check_finite(out, "row_sums");
  maybe_record("row_sums", out, tracked(x), [x = x, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& g = x.grad();
    const int64_t n2 = x.cols();
    for (int64_t r = 0; r < x.rows(); ++r)
      for (int64_t c = 0; c < n2; ++c) g[r * n2 + c] += og[r];
  });
  return out;
}

template <class S>
TensorT<S> gelu(const TensorT<S>& x) {
  // Exact form 0.5*x*(1 + erf(x/sqrt(2))); derivative Phi(x) + x*phi(x).
  constexpr double kInvSqrt2 = 0.7071067811865475;
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return unary_op("gelu", x, [&](S v, S& y, S& d) {
    const double xv = static_cast<double>(v);
    const double cdf = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
    y = static_cast<S>(xv * cdf);
    d = static_cast<S>(cdf + xv * pdf);
  });
}

template <class S>
TensorT<S> tanh(const TensorT<S>& x) {
  return unary_op("tanh", x, [](S v, S& y, S& d) {
    y = std::tanh(v);
    d = S(1) - y * y;
  });
}

template <class S>
TensorT<S> exp(const TensorT<S>& x) {
  return unary_op("exp", x, [](S v, S& y, S& d) {
    y = std::exp(v);
    d = y;
  });
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  return unary_op("sigmoid", x, [](S v, S& y, S& d) {
    y = S(1) / (S(1) + std::exp(-v));
    d = y * (S(1) - y);
  });
}

template <class S>
TensorT<S> sqrt(const TensorT<S>& x) {
  return unary_op("sqrt", x, [](S v, S& y, S& d) {
    y = std::sqrt(v);
    d = S(0.5) / y;
  });
}

template <class S>
TensorT<S> abs(const TensorT<S>& x) {
  return unary_op("abs", x, [](S v, S& y, S& d) {
    y = std::abs(v);
    d = v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0));
  });
}

template <class S>
TensorT<S> clamp01(const TensorT<S>& x) {
  return unary_op("clamp01", x, [](S v, S& y, S& d) {
    y = std::min(S(1), std::max(S(0), v));
    d = (v >= S(0) && v <= S(1)) ? S(1) : S(0);
  });
}

template <class S>
TensorT<S> maximum(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "maximum");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] >= bv[i] ? av[i] : bv[i];
  check_finite(out, "maximum");
  maybe_record("maximum", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& av2 = a.values();
    const auto& bv2 = b.values();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (av2[i] >= bv2[i]) g[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (av2[i] < bv2[i]) g[i] += og[i];
    }
  });
  return out;
}

template <class S>
TensorT<S> minimum(const TensorT<S>& a, const TensorT<S>& b) {
  require_same_shape(a, b, "minimum");
  TensorT<S> out(a.rows(), a.cols());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] <= bv[i] ? av[i] : bv[i];
  check_finite(out, "minimum");
  maybe_record("minimum", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& av2 = a.values();
    const auto& bv2 = b.values();
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (av2[i] <= bv2[i]) g[i] += og[i];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if (av2[i] > bv2[i]) g[i] += og[i];
    }
  });
  return out;
}

namespace {

template <class S>
TensorT<S> softmax_rows_impl(const TensorT<S>& x, const std::vector<uint8_t>* valid) {
  check_finite(x, "softmax_rows(input)");
  if (valid) {
    if (static_cast<int64_t>(valid->size()) != x.cols())
      throw ShapeError("softmax_rows_masked: mask length " + std::to_string(valid->size()) +
                       " != column count " + std::to_string(x.cols()));
    bool any = false;
    for (uint8_t v : *valid) any = any || v;
    if (!any) throw ShapeError("softmax_rows_masked: all columns masked out");
  }
  const int64_t m = x.rows(), n = x.cols();
  TensorT<S> out(m, n);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < m; ++r) {
    S mx = -std::numeric_limits<S>::infinity();
    for (int64_t c = 0; c < n; ++c)
      if (!valid || (*valid)[c]) mx = std::max(mx, xv[r * n + c]);
    S z = S(0);
    for (int64_t c = 0; c < n; ++c) {
      if (!valid || (*valid)[c]) {
        const S e = std::exp(xv[r * n + c] - mx);
        ov[r * n + c] = e;
        z += e;
      } else {
        ov[r * n + c] = S(0);
      }
    }
    for (int64_t c = 0; c < n; ++c) ov[r * n + c] /= z;
  }
  check_finite(out, "softmax_rows");
  const char* op = valid ? "softmax_rows_masked" : "softmax_rows";
  maybe_record(op, out, tracked(x), [x = x, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& y = out.values();
    auto& g = x.grad();
    const int64_t m2 = x.rows(), n2 = x.cols();
    for (int64_t r = 0; r < m2; ++r) {
      S dot = S(0);
      for (int64_t c = 0; c < n2; ++c) dot += og[r * n2 + c] * y[r * n2 + c];
      for (int64_t c = 0; c < n2; ++c)
        g[r * n2 + c] += y[r * n2 + c] * (og[r * n2 + c] - dot);
    }
  });
  return out;
}

}  // namespace

template <class S>
TensorT<S> softmax_rows(const TensorT<S>& x) {
  return softmax_rows_impl<S>(x, nullptr);
}

template <class S>
TensorT<S> softmax_rows_masked(const TensorT<S>& x, const std::vector<uint8_t>& valid) {
  return softmax_rows_impl<S>(x, &valid);
}

template <class S>
TensorT<S> concat_cols(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: leading dimensions differ, " + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()));
  const int64_t m = a.rows(), d1 = a.cols(), d2 = b.cols();
  TensorT<S> out(m, d1 + d2);
  for (int64_t r = 0; r < m; ++r) {
    for (int64_t c = 0; c < d1; ++c) out.at(r, c) = a.at(r, c);
    for (int64_t c = 0; c < d2; ++c) out.at(r, d1 + c) = b.at(r, c);
  }
  maybe_record("concat_cols", out, tracked(a) || tracked(b), [a = a, b = b, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const int64_t m2 = a.rows(), d1b = a.cols(), d2b = b.cols(), w = d1b + d2b;
    if (a.requires_grad()) {
      auto& g = a.grad();
      for (int64_t r = 0; r < m2; ++r)
        for (int64_t c = 0; c < d1b; ++c) g[r * d1b + c] += og[r * w + c];
    }
    if (b.requires_grad()) {
      auto& g = b.grad();
      for (int64_t r = 0; r < m2; ++r)
        for (int64_t c = 0; c < d2b; ++c) g[r * d2b + c] += og[r * w + d1b + c];
    }
  });
  return out;
}

template <class S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const int64_t d = parts[0].cols();
  int64_t total = 0;
  bool any_tracked = false;
  for (const auto& p : parts) {
    if (p.cols() != d) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
    any_tracked = any_tracked || tracked(p);
  }
  TensorT<S> out(total, d);
  int64_t row = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out.values().begin() + row * d);
    row += p.rows();
  }
  maybe_record("concat_rows", out, any_tracked, [parts = parts, out = out]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const int64_t d2 = out.cols();
    int64_t r0 = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto& g = p.grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += og[r0 * d2 + i];
      }
      r0 += p.rows();
    }
  });
  return out;
}

template <class S>
TensorT<S> slice(const TensorT<S>& x, int64_t r0, int64_t nr, int64_t c0, int64_t nc) {
  if (r0 < 0 || c0 < 0 || nr < 1 || nc < 1 || r0 + nr > x.rows() || c0 + nc > x.cols())
    throw ShapeError("slice: window [" + std::to_string(r0) + "+" + std::to_string(nr) +
                     ", " + std::to_string(c0) + "+" + std::to_string(nc) +
                     ") outside " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  TensorT<S> out(nr, nc);
  for (int64_t r = 0; r < nr; ++r)
    for (int64_t c = 0; c < nc; ++c) out.at(r, c) = x.at(r0 + r, c0 + c);
  maybe_record("slice", out, tracked(x), [x = x, out = out, r0, c0]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    auto& g = x.grad();
    const int64_t w = x.cols(), nr2 = out.rows(), nc2 = out.cols();
    for (int64_t r = 0; r < nr2; ++r)
      for (int64_t c = 0; c < nc2; ++c)
        g[(r0 + r) * w + (c0 + c)] += og[r * nc2 + c];
  });
  return out;
}

template <class S>
TensorT<S> layer_norm_rows(const TensorT<S>& x, const TensorT<S>& gain,
                           const TensorT<S>& bias, S eps) {
  const int64_t m = x.rows(), n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
    throw ShapeError("layer_norm_rows: gain/bias must be 1x" + std::to_string(n));
  TensorT<S> out(m, n);
  std::vector<S> xhat(static_cast<size_t>(m * n));
  std::vector<S> inv_sigma(static_cast<size_t>(m));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  auto& ov = out.values();
  for (int64_t r = 0; r < m; ++r) {
    S mu = S(0);
    for (int64_t c = 0; c < n; ++c) mu += xv[r * n + c];
    mu /= static_cast<S>(n);
    S var = S(0);
    for (int64_t c = 0; c < n; ++c) {
      const S d = xv[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<S>(n);
    const S inv = S(1) / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    for (int64_t c = 0; c < n; ++c) {
      const S h = (xv[r * n + c] - mu) * inv;
      xhat[r * n + c] = h;
      ov[r * n + c] = h * gv[c] + bv[c];
    }
  }
  check_finite(out, "layer_norm_rows");
  maybe_record("layer_norm_rows", out,
               tracked(x) || tracked(gain) || tracked(bias),
               [x = x, gain = gain, bias = bias, out = out, xh = std::move(xhat),
                inv = std::move(inv_sigma)]() mutable {
    if (!out.has_grad()) return;
    const auto& og = out.grad();
    const auto& gv2 = gain.values();
    const int64_t m2 = x.rows(), n2 = x.cols();
    if (x.requires_grad()) {
      auto& g = x.grad();
      for (int64_t r = 0; r < m2; ++r) {
        S m1 = S(0), m2sum = S(0);
        for (int64_t c = 0; c < n2; ++c) {
          const S dh = og[r * n2 + c] * gv2[c];
          m1 += dh;
          m2sum += dh * xh[r * n2 + c];
        }
        m1 /= static_cast<S>(n2);
        m2sum /= static_cast<S>(n2);
        for (int64_t c = 0; c < n2; ++c) {
          const S dh = og[r * n2 + c] * gv2[c];
          g[r * n2 + c] += inv[r] * (dh - m1 - xh[r * n2 + c] * m2sum);
        }
      }
    }
    if (gain.requires_grad()) {
      auto& g = gain.grad();
      for (int64_t r = 0; r < m2; ++r)
        for (int64_t c = 0; c < n2; ++c) g[c] += og[r * n2 + c] * xh[r * n2 + c];
    }
    if (bias.requires_grad()) {
      auto& g = bias.grad();
      for (int64_t r = 0; r < m2; ++r)
        for (int64_t c = 0; c < n2; ++c) g[c] += og[r * n2 + c];
    }
  });
  return out;
}

#define HLGT_INSTANTIATE_OPS(S)                                                          \
  template TensorT<S> matmul<S>(const TensorT<S>&, const TensorT<S>&);                   \
  template TensorT<S> transpose<S>(const TensorT<S>&);                                   \
  template TensorT<S> add<S>(const TensorT<S>&, const TensorT<S>&);                      \
  template TensorT<S> sub<S>(const TensorT<S>&, const TensorT<S>&);                      \
  template TensorT<S> mul<S>(const TensorT<S>&, const TensorT<S>&);                      \
  template TensorT<S> div<S>(const TensorT<S>&, const TensorT<S>&);                      \
  template TensorT<S> scale<S>(const TensorT<S>&, S);                                    \
  template TensorT<S> add_scalar<S>(const TensorT<S>&, S);                               \
  template TensorT<S> add_row_bias<S>(const TensorT<S>&, const TensorT<S>&);             \
  template TensorT<S> repeat_row<S>(const TensorT<S>&, int64_t);                         \
  template TensorT<S> scale_by<S>(const TensorT<S>&, const TensorT<S>&);                 \
  template TensorT<S> sum<S>(const TensorT<S>&);                                         \
  template TensorT<S> mean<S>(const TensorT<S>&);                                        \
  template TensorT<S> row_sums<S>(const TensorT<S>&);                                    \
  template TensorT<S> gelu<S>(const TensorT<S>&);                                        \
  template TensorT<S> tanh<S>(const TensorT<S>&);                                        \
  template TensorT<S> exp<S>(const TensorT<S>&);                                         \
  template TensorT<S> sigmoid<S>(const TensorT<S>&);                                     \
  template TensorT<S> sqrt<S>(const TensorT<S>&);                                        \
  template TensorT<S> abs<S>(const TensorT<S>&);                                         \
  template TensorT<S> clamp01<S>(const TensorT<S>&);                                     \
  template TensorT<S> maximum<S>(const TensorT<S>&, const TensorT<S>&);                  \
  template TensorT<S> minimum<S>(const TensorT<S>&, const TensorT<S>&);                  \
  template TensorT<S> softmax_rows<S>(const TensorT<S>&);                                \
  template TensorT<S> softmax_rows_masked<S>(const TensorT<S>&,                          \
                                             const std::vector<uint8_t>&);               \
  template TensorT<S> concat_cols<S>(const TensorT<S>&, const TensorT<S>&);              \
  template TensorT<S> concat_rows<S>(const std::vector<TensorT<S>>&);                    \
  template TensorT<S> slice<S>(const TensorT<S>&, int64_t, int64_t, int64_t, int64_t);   \
  template TensorT<S> layer_norm_rows<S>(const TensorT<S>&, const TensorT<S>&,           \
                                         const TensorT<S>&, S);

HLGT_INSTANTIATE_OPS(float)
HLGT_INSTANTIATE_OPS(double)

#undef HLGT_INSTANTIATE_OPS

}  // namespace hlgt
