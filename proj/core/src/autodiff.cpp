#include "wcl/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "wcl/error.hpp"

namespace wcl {

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Mat>;
using MapM = Eigen::Map<Mat>;


MapM view(std::vector<Real>& v, const Shape& s) {
  return MapM(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

MapC cview(const std::vector<Real>& v, const Shape& s) {
  return MapC(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

Shape op_shape(const Shape& s, bool t) { return t ? Shape{s.cols, s.rows} : s; }

// z += op(x) * op(y)
template <typename X, typename Y>
void gemm_acc(const X& x, bool tx, const Y& y, bool ty, MapM& z) {
  if (!tx && !ty) {
    z.noalias() += x * y;
  } else if (!tx && ty) {
    z.noalias() += x * y.transpose();
  } else if (tx && !ty) {
    z.noalias() += x.transpose() * y;
  } else {
    z.noalias() += x.transpose() * y.transpose();
  }
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

void check_axis(const char* op, int axis) {
  if (axis != 0 && axis != 1) throw ContractViolation(std::string(op) + ": axis must be 0 or 1");
}

// Element (g, k) of the k-th entry along `axis` in group g.
struct AxisView {
  std::size_t groups, count, group_stride, elem_stride;
  AxisView(const Shape& s, int axis)
      : groups(axis == 1 ? s.rows : s.cols),
        count(axis == 1 ? s.cols : s.rows),
        group_stride(axis == 1 ? s.cols : 1),
        elem_stride(axis == 1 ? 1 : s.cols) {}
  std::size_t at(std::size_t g, std::size_t k) const { return g * group_stride + k * elem_stride; }
};

}  // namespace

std::string Shape::str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }

Tensor Tensor::zeros(Shape shape) { return constant(shape, std::vector<Real>(shape.numel(), Real(0))); }

Tensor Tensor::constant(Shape shape, std::vector<Real> values) {
  if (values.size() != shape.numel()) {
    throw ContractViolation("tensor of shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                            " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<Real> values) {
  Tensor t = constant(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Real Tensor::item() const {
  if (numel() != 1) throw ContractViolation("item() on tensor of shape " + shape().str());
  return node_->value[0];
}

std::span<const Real> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), Real(0));
  return node_->grad;
}

Tensor Tape::record(Shape shape, std::vector<Real> value, std::vector<Tensor> parents,
                    std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.node_->requires_grad;
  if (record_ && needs) {
    node->requires_grad = true;
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
    nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) throw ContractViolation("backward() needs a scalar root, got " + root.shape().str());
  if (!root.node_->requires_grad) return;
  root.node_->ensure_grad()[0] += Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
  }
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  const Shape sa = op_shape(a.shape(), ta), sb = op_shape(b.shape(), tb);
  if (sa.cols != sb.rows) shape_error("matmul", sa, sb);
  Shape out{sa.rows, sb.cols};
  std::vector<Real> value(out.numel(), Real(0));
  {
    MapM z = view(value, out);
    gemm_acc(view(a.node_->value, a.shape()), ta, view(b.node_->value, b.shape()), tb, z);
  }
  auto pa = a.node_.get(), pb = b.node_.get();
  return record(out, std::move(value), {a, b}, [pa, pb, ta, tb](detail::Node& self) {
    MapC dc = cview(self.grad, self.shape);
    if (pa->requires_grad) {
      MapM da = view(pa->ensure_grad(), pa->shape);
      MapC bv = cview(pb->value, pb->shape);
      if (!ta) {
        gemm_acc(dc, false, bv, !tb, da);
      } else {
        gemm_acc(bv, tb, dc, true, da);
      }
    }
    if (pb->requires_grad) {
      MapM db = view(pb->ensure_grad(), pb->shape);
      MapC av = cview(pa->value, pa->shape);
      if (!tb) {
        gemm_acc(av, !ta, dc, false, db);
      } else {
        gemm_acc(dc, true, av, ta, db);
      }
    }
  });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
  if (!(a.shape() == b.shape()) && !broadcast) shape_error("add", a.shape(), b.shape());
  const std::size_t cols = a.cols();
  std::vector<Real> value(a.node_->value);
  for (std::size_t i = 0; i < value.size(); ++i) value[i] += b.node_->value[broadcast ? i % cols : i];
  auto pa = a.node_.get(), pb = b.node_.get();
  return record(a.shape(), std::move(value), {a, b}, [pa, pb, broadcast, cols](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[broadcast ? i % cols : i] += self.grad[i];
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) shape_error("mul", a.shape(), b.shape());
  std::vector<Real> value(a.numel());
  for (std::size_t i = 0; i < value.size(); ++i) value[i] = a.node_->value[i] * b.node_->value[i];
  auto pa = a.node_.get(), pb = b.node_.get();
  return record(a.shape(), std::move(value), {a, b}, [pa, pb](detail::Node& self) {
    if (pa->requires_grad) {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor Tape::scale(const Tensor& a, Real s) {
  std::vector<Real> value(a.node_->value);
  for (auto& v : value) v *= s;
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa, s](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<Real> value(a.node_->value);
  for (auto& v : value) v = v > 0 ? v : Real(0);
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pa->value[i] > 0) g[i] += self.grad[i];
    }
  });
}

Tensor Tape::log(const Tensor& a) {
  std::vector<Real> value(a.node_->value);
  for (auto& v : value) v = std::log(v);
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pa->value[i];
  });
}

Tensor Tape::exp(const Tensor& a) {
  std::vector<Real> value(a.node_->value);
  for (auto& v : value) v = std::exp(v);
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

Tensor Tape::softmax(const Tensor& a, int axis) {
  check_axis("softmax", axis);
  AxisView ax(a.shape(), axis);
  std::vector<Real> value(a.numel());
  const auto& x = a.node_->value;
  for (std::size_t g = 0; g < ax.groups; ++g) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < ax.count; ++k) mx = std::max(mx, x[ax.at(g, k)]);
    Real z = 0;
    for (std::size_t k = 0; k < ax.count; ++k) z += value[ax.at(g, k)] = std::exp(x[ax.at(g, k)] - mx);
    for (std::size_t k = 0; k < ax.count; ++k) value[ax.at(g, k)] /= z;
  }
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa, ax](detail::Node& self) {
    auto& gx = pa->ensure_grad();
    for (std::size_t g = 0; g < ax.groups; ++g) {
      Real dot = 0;
      for (std::size_t k = 0; k < ax.count; ++k) dot += self.grad[ax.at(g, k)] * self.value[ax.at(g, k)];
      for (std::size_t k = 0; k < ax.count; ++k) {
        auto i = ax.at(g, k);
        gx[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor Tape::log_softmax(const Tensor& a, int axis) {
  check_axis("log_softmax", axis);
  AxisView ax(a.shape(), axis);
  std::vector<Real> value(a.numel());
  const auto& x = a.node_->value;
  for (std::size_t g = 0; g < ax.groups; ++g) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t k = 0; k < ax.count; ++k) mx = std::max(mx, x[ax.at(g, k)]);
    Real z = 0;
    for (std::size_t k = 0; k < ax.count; ++k) z += std::exp(x[ax.at(g, k)] - mx);
    const Real lse = mx + std::log(z);
    for (std::size_t k = 0; k < ax.count; ++k) value[ax.at(g, k)] = x[ax.at(g, k)] - lse;
  }
  auto pa = a.node_.get();
  return record(a.shape(), std::move(value), {a}, [pa, ax](detail::Node& self) {
    auto& gx = pa->ensure_grad();
    for (std::size_t g = 0; g < ax.groups; ++g) {
      Real total = 0;
      for (std::size_t k = 0; k < ax.count; ++k) total += self.grad[ax.at(g, k)];
      for (std::size_t k = 0; k < ax.count; ++k) {
        auto i = ax.at(g, k);
        gx[i] += self.grad[i] - std::exp(self.value[i]) * total;
      }
    }
  });
}

Tensor Tape::sum(const Tensor& a) {
  Real total = 0;
  for (Real v : a.node_->value) total += v;
  auto pa = a.node_.get();
  return record({1, 1}, {total}, {a}, [pa](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor Tape::mean(const Tensor& a, int axis) {
  check_axis("mean", axis);
  if (a.numel() == 0) throw ContractViolation("mean of empty tensor " + a.shape().str());
  AxisView ax(a.shape(), axis);
  Shape out = axis == 0 ? Shape{1, a.cols()} : Shape{a.rows(), 1};
  std::vector<Real> value(ax.groups, Real(0));
  for (std::size_t g = 0; g < ax.groups; ++g) {
    for (std::size_t k = 0; k < ax.count; ++k) value[g] += a.node_->value[ax.at(g, k)];
    value[g] /= static_cast<Real>(ax.count);
  }
  // Groups run along the kept dimension: for axis 0, group g is column g.
  auto pa = a.node_.get();
  return record(out, std::move(value), {a}, [pa, red = ax](detail::Node& self) {
    auto& gx = pa->ensure_grad();
    const Real inv = Real(1) / static_cast<Real>(red.count);
    for (std::size_t g = 0; g < red.groups; ++g) {
      for (std::size_t k = 0; k < red.count; ++k) gx[red.at(g, k)] += self.grad[g] * inv;
    }
  });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.shape() != Shape{1, d}) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.shape() != Shape{1, d}) shape_error("layer_norm bias", x.shape(), bias.shape());
  std::vector<Real> value(x.numel());
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto inv_std = std::make_shared<std::vector<Real>>(n);
  const auto& xv = x.node_->value;
  for (std::size_t r = 0; r < n; ++r) {
    Real mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += xv[r * d + c];
    mu /= static_cast<Real>(d);
    Real var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (xv[r * d + c] - mu) * (xv[r * d + c] - mu);
    var /= static_cast<Real>(d);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const Real h = (xv[r * d + c] - mu) * is;
      (*xhat)[r * d + c] = h;
      value[r * d + c] = h * gain.node_->value[c] + bias.node_->value[c];
    }
  }
  auto px = x.node_.get(), pg = gain.node_.get(), pb = bias.node_.get();
  return record(x.shape(), std::move(value), {x, gain, bias},
                [px, pg, pb, xhat, inv_std, n, d](detail::Node& self) {
                  const auto& dy = self.grad;
                  if (pg->requires_grad) {
                    auto& g = pg->ensure_grad();
                    for (std::size_t i = 0; i < dy.size(); ++i) g[i % d] += dy[i] * (*xhat)[i];
                  }
                  if (pb->requires_grad) {
                    auto& g = pb->ensure_grad();
                    for (std::size_t i = 0; i < dy.size(); ++i) g[i % d] += dy[i];
                  }
                  if (px->requires_grad) {
                    auto& gx = px->ensure_grad();
                    for (std::size_t r = 0; r < n; ++r) {
                      Real m1 = 0, m2 = 0;
                      for (std::size_t c = 0; c < d; ++c) {
                        const Real dh = dy[r * d + c] * pg->value[c];
                        m1 += dh;
                        m2 += dh * (*xhat)[r * d + c];
                      }
                      m1 /= static_cast<Real>(d);
                      m2 /= static_cast<Real>(d);
                      for (std::size_t c = 0; c < d; ++c) {
                        const Real dh = dy[r * d + c] * pg->value[c];
                        gx[r * d + c] += (*inv_std)[r] * (dh - m1 - (*xhat)[r * d + c] * m2);
                      }
                    }
                  }
                });
}

Tensor Tape::embedding_lookup(const Tensor& table, std::span<const TokenId> ids) {
  const std::size_t d = table.cols();
  std::vector<Real> value(ids.size() * d);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows()) {
      throw ContractViolation("embedding_lookup: id " + std::to_string(ids[i]) + " outside table " +
                              table.shape().str());
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    std::copy_n(table.node_->value.begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                value.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto pt = table.node_.get();
  return record({ids.size(), d}, std::move(value), {table}, [pt, rows = std::move(rows), d](detail::Node& self) {
    auto& g = pt->ensure_grad();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) g[rows[i] * d + c] += self.grad[i * d + c];
    }
  });
}

Tensor Tape::concat(const std::vector<Tensor>& parts, int axis) {
  check_axis("concat", axis);
  if (parts.empty()) throw ContractViolation("concat of zero tensors");
  Shape out = parts[0].shape();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const auto& s = parts[k].shape();
    if (axis == 0) {
      if (s.cols != out.cols) shape_error("concat", out, s);
      out.rows += s.rows;
    } else {
      if (s.rows != out.rows) shape_error("concat", out, s);
      out.cols += s.cols;
    }
  }
  std::vector<Real> value(out.numel());
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto& pv = p.node_->value;
    if (axis == 0) {
      std::copy(pv.begin(), pv.end(), value.begin() + static_cast<std::ptrdiff_t>(off * out.cols));
      off += p.rows();
    } else {
      for (std::size_t r = 0; r < p.rows(); ++r) {
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * p.cols()), p.cols(),
                    value.begin() + static_cast<std::ptrdiff_t>(r * out.cols + off));
      }
      off += p.cols();
    }
  }
  std::vector<detail::Node*> raw;
  for (const auto& p : parts) raw.push_back(p.node_.get());
  return record(out, std::move(value), parts, [raw, offsets, axis](detail::Node& self) {
    const std::size_t oc = self.shape.cols;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      auto* p = raw[k];
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      const std::size_t pr = p->shape.rows, pc = p->shape.cols;
      for (std::size_t r = 0; r < pr; ++r) {
        for (std::size_t c = 0; c < pc; ++c) {
          const std::size_t src = axis == 0 ? (offsets[k] + r) * oc + c : r * oc + offsets[k] + c;
          g[r * pc + c] += self.grad[src];
        }
      }
    }
  });
}

Tensor Tape::slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  check_axis("slice", axis);
  const std::size_t limit = axis == 0 ? a.rows() : a.cols();
  if (begin > end || end > limit) {
    throw ContractViolation("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                            std::to_string(axis) + " of " + a.shape().str());
  }
  Shape out = axis == 0 ? Shape{end - begin, a.cols()} : Shape{a.rows(), end - begin};
  std::vector<Real> value(out.numel());
  const std::size_t ac = a.cols();
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      value[r * out.cols + c] = axis == 0 ? a.node_->value[(begin + r) * ac + c] : a.node_->value[r * ac + begin + c];
    }
  }
  auto pa = a.node_.get();
  return record(out, std::move(value), {a}, [pa, axis, begin, ac](detail::Node& self) {
    auto& g = pa->ensure_grad();
    const std::size_t oc = self.shape.cols;
    for (std::size_t r = 0; r < self.shape.rows; ++r) {
      for (std::size_t c = 0; c < oc; ++c) {
        const std::size_t dst = axis == 0 ? (begin + r) * ac + c : r * ac + begin + c;
        g[dst] += self.grad[r * oc + c];
      }
    }
  });
}

Tensor Tape::transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<Real> value(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) value[j * r + i] = a.node_->value[i * c + j];
  }
  auto pa = a.node_.get();
  return record({c, r}, std::move(value), {a}, [pa, r, c](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor Tape::cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_error("cosine_similarity", a.shape(), b.shape());
  constexpr Real kMinNorm = Real(1e-8);
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  auto normalize = [d, kMinNorm](const std::vector<Real>& v, std::size_t rows, std::vector<Real>& unit,
                                 std::vector<Real>& norm) {
    unit.resize(v.size());
    norm.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      Real s = 0;
      for (std::size_t c = 0; c < d; ++c) s += v[r * d + c] * v[r * d + c];
      norm[r] = std::max(std::sqrt(s), kMinNorm);
      for (std::size_t c = 0; c < d; ++c) unit[r * d + c] = v[r * d + c] / norm[r];
    }
  };
  auto ua = std::make_shared<std::vector<Real>>(), ub = std::make_shared<std::vector<Real>>();
  auto na = std::make_shared<std::vector<Real>>(), nb = std::make_shared<std::vector<Real>>();
  normalize(a.node_->value, n, *ua, *na);
  normalize(b.node_->value, m, *ub, *nb);
  std::vector<Real> value(n * m, Real(0));
  {
    MapM z(value.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    gemm_acc(view(*ua, {n, d}), false, view(*ub, {m, d}), true, z);
  }
  auto pa = a.node_.get(), pb = b.node_.get();
  return record({n, m}, std::move(value), {a, b}, [pa, pb, ua, ub, na, nb, n, m, d, kMinNorm](detail::Node& self) {
    // d(unit)/dx = (I - u u^T) / |x| while the norm is above the clamp.
    auto push = [d, kMinNorm](detail::Node* p, const std::vector<Real>& unit, const std::vector<Real>& norm,
                              std::vector<Real>& dunit, std::size_t rows) {
      auto& g = p->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const bool clamped = norm[r] <= kMinNorm;
        Real proj = 0;
        if (!clamped) {
          for (std::size_t c = 0; c < d; ++c) proj += unit[r * d + c] * dunit[r * d + c];
        }
        for (std::size_t c = 0; c < d; ++c) {
          g[r * d + c] += (dunit[r * d + c] - proj * unit[r * d + c]) / norm[r];
        }
      }
    };
    MapC dc = cview(self.grad, self.shape);
    if (pa->requires_grad) {
      std::vector<Real> du(n * d, Real(0));
      MapM z = view(du, {n, d});
      gemm_acc(dc, false, view(*ub, {m, d}), false, z);
      push(pa, *ua, *na, du, n);
    }
    if (pb->requires_grad) {
      std::vector<Real> du(m * d, Real(0));
      MapM z = view(du, {m, d});
      gemm_acc(dc, true, view(*ua, {n, d}), false, z);
      push(pb, *ub, *nb, du, m);
    }
  });
}

Tensor Tape::diag(const Tensor& a) {
  if (a.rows() != a.cols()) throw ContractViolation("diag of non-square " + a.shape().str());
  const std::size_t n = a.rows();
  std::vector<Real> value(n);
  for (std::size_t i = 0; i < n; ++i) value[i] = a.node_->value[i * n + i];
  auto pa = a.node_.get();
  return record({1, n}, std::move(value), {a}, [pa, n](detail::Node& self) {
    auto& g = pa->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += self.grad[i];
  });
}

Tensor Tape::cross_entropy_with_label_smoothing(const Tensor& logits, std::span<const TokenId> targets, Real eps) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) {
    throw ContractViolation("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                            logits.shape().str());
  }
  auto probs = std::make_shared<std::vector<Real>>(logits.numel());
  std::vector<std::size_t> ys(n);
  Real loss = 0;
  const auto& x = logits.node_->value;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw ContractViolation("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                              std::to_string(v) + " classes");
    }
    ys[r] = static_cast<std::size_t>(targets[r]);
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < v; ++c) mx = std::max(mx, x[r * v + c]);
    Real z = 0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(x[r * v + c] - mx);
    const Real lse = mx + std::log(z);
    Real sum_logp = 0;
    for (std::size_t c = 0; c < v; ++c) {
      const Real lp = x[r * v + c] - lse;
      (*probs)[r * v + c] = std::exp(lp);
      sum_logp += lp;
    }
    loss -= (Real(1) - eps) * (x[r * v + ys[r]] - lse) + eps / static_cast<Real>(v) * sum_logp;
  }
  auto pl = logits.node_.get();
  return record({1, 1}, {loss}, {logits}, [pl, probs, ys = std::move(ys), v, eps](detail::Node& self) {
    auto& g = pl->ensure_grad();
    const Real up = self.grad[0];
    const Real uniform = eps / static_cast<Real>(v);
    for (std::size_t r = 0; r < ys.size(); ++r) {
      for (std::size_t c = 0; c < v; ++c) {
        const Real q = (c == ys[r] ? Real(1) - eps : Real(0)) + uniform;
        g[r * v + c] += up * ((*probs)[r * v + c] - q);
      }
    }
  });
}

Tensor Tape::attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                       std::span<const std::size_t> q_off, std::span<const std::size_t> q_len,
                       std::span<const std::size_t> k_off, std::span<const std::size_t> k_len, bool causal) {
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d) shape_error("attention", q.shape(), k.cols() != d ? k.shape() : v.shape());
  if (k.rows() != v.rows()) shape_error("attention", k.shape(), v.shape());
  if (heads == 0 || d % heads != 0) throw ContractViolation("attention: width " + std::to_string(d) +
                                                            " is not divisible by " + std::to_string(heads) + " heads");
  const std::size_t segs = q_off.size();
  if (q_len.size() != segs || k_off.size() != segs || k_len.size() != segs) {
    throw ContractViolation("attention: segment lists differ in length");
  }
  for (std::size_t s = 0; s < segs; ++s) {
    if (q_off[s] + q_len[s] > q.rows() || k_off[s] + k_len[s] > k.rows() || k_len[s] == 0) {
      throw ContractViolation("attention: segment " + std::to_string(s) + " out of range");
    }
    if (causal && q_len[s] > k_len[s]) throw ContractViolation("attention: causal segment with fewer keys than queries");
  }
  const std::size_t dh = d / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  // Probabilities of every block, stored back to back for the backward pass.
  auto probs = std::make_shared<std::vector<Real>>();
  std::vector<std::size_t> p_off(segs * heads);
  std::size_t total = 0;
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      p_off[s * heads + h] = total;
      total += q_len[s] * k_len[s];
    }
  }
  probs->assign(total, Real(0));
  std::vector<Real> value(q.rows() * d, Real(0));
  const auto& qv = q.node_->value;
  const auto& kv = k.node_->value;
  const auto& vv = v.node_->value;
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t nq = q_len[s], nk = k_len[s];
    for (std::size_t h = 0; h < heads; ++h) {
      Real* p = probs->data() + p_off[s * heads + h];
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < nq; ++i) {
        const Real* qi = &qv[(q_off[s] + i) * d + c0];
        const std::size_t visible = causal ? i + 1 : nk;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < visible; ++j) {
          const Real* kj = &kv[(k_off[s] + j) * d + c0];
          Real dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          p[i * nk + j] = dot * scale;
          mx = std::max(mx, p[i * nk + j]);
        }
        Real z = 0;
        for (std::size_t j = 0; j < visible; ++j) z += p[i * nk + j] = std::exp(p[i * nk + j] - mx);
        Real* out = &value[(q_off[s] + i) * d + c0];
        for (std::size_t j = 0; j < visible; ++j) {
          p[i * nk + j] /= z;
          const Real* vj = &vv[(k_off[s] + j) * d + c0];
          for (std::size_t c = 0; c < dh; ++c) out[c] += p[i * nk + j] * vj[c];
        }
      }
    }
  }
  std::vector<std::size_t> qo(q_off.begin(), q_off.end()), ql(q_len.begin(), q_len.end());
  std::vector<std::size_t> ko(k_off.begin(), k_off.end()), kl(k_len.begin(), k_len.end());
  auto pq = q.node_.get(), pk = k.node_.get(), pv = v.node_.get();
  return record(q.shape(), std::move(value), {q, k, v},
                [pq, pk, pv, probs, p_off = std::move(p_off), qo = std::move(qo), ql = std::move(ql),
                 ko = std::move(ko), kl = std::move(kl), heads, dh, d, scale, causal](detail::Node& self) {
                  const auto& go = self.grad;
                  std::vector<Real>* gq = pq->requires_grad ? &pq->ensure_grad() : nullptr;
                  std::vector<Real>* gk = pk->requires_grad ? &pk->ensure_grad() : nullptr;
                  std::vector<Real>* gv = pv->requires_grad ? &pv->ensure_grad() : nullptr;
                  const auto& qv = pq->value;
                  const auto& kv = pk->value;
                  const auto& vv = pv->value;
                  std::vector<Real> dp;
                  for (std::size_t s = 0; s < qo.size(); ++s) {
                    const std::size_t nq = ql[s], nk = kl[s];
                    dp.resize(nk);
                    for (std::size_t h = 0; h < heads; ++h) {
                      const Real* p = probs->data() + p_off[s * heads + h];
                      const std::size_t c0 = h * dh;
                      for (std::size_t i = 0; i < nq; ++i) {
                        const std::size_t visible = causal ? i + 1 : nk;
                        const Real* goi = &go[(qo[s] + i) * d + c0];
                        Real dot = 0;
                        for (std::size_t j = 0; j < visible; ++j) {
                          const Real* vj = &vv[(ko[s] + j) * d + c0];
                          Real g = 0;
                          for (std::size_t c = 0; c < dh; ++c) g += goi[c] * vj[c];
                          dp[j] = g;
                          dot += g * p[i * nk + j];
                          if (gv) {
                            Real* gvj = &(*gv)[(ko[s] + j) * d + c0];
                            for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[i * nk + j] * goi[c];
                          }
                        }
                        const Real* qi = &qv[(qo[s] + i) * d + c0];
                        for (std::size_t j = 0; j < visible; ++j) {
                          const Real ds = p[i * nk + j] * (dp[j] - dot) * scale;
                          if (ds == 0) continue;
                          const Real* kj = &kv[(ko[s] + j) * d + c0];
                          if (gq) {
                            Real* gqi = &(*gq)[(qo[s] + i) * d + c0];
                            for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                          }
                          if (gk) {
                            Real* gkj = &(*gk)[(ko[s] + j) * d + c0];
                            for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                          }
                        }
                      }
                    }
                  }
                });
}

Tensor Tape::dropout(const Tensor& a, Real rate, std::mt19937_64& rng) {
  if (rate <= 0) return a;
  if (rate >= 1) throw ContractViolation("dropout rate must be below 1");
  const Real keep_scale = Real(1) / (Real(1) - rate);
  std::vector<Real> mask(a.numel());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < static_cast<double>(rate) ? Real(0) : keep_scale;
  }
  return mul(a, Tensor::constant(a.shape(), std::move(mask)));
}

}  // namespace wcl
