#include "brepmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace brepmae {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<double> value,
                                     bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->ensure_grad();
  return n;
}

bool any_rg(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

// Wire an op result into the tape. The backward fn is only attached when a
// parent needs gradients, so data-only paths stay leaf-like and cheap.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> parents,
                   std::function<void(TensorNode&)> bw) {
  bool rg = any_rg(parents);
  auto n = new_node(std::move(shape), std::move(value), rg);
  if (rg) {
    for (const Tensor* p : parents)
      if (p->defined()) n->parents.push_back(p->node());
    n->backward_fn = std::move(bw);
  }
  return Tensor(n);
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(new_node(shape, std::vector<double>(shape_numel(shape), 0.0),
                         requires_grad));
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  return Tensor(new_node(shape, std::vector<double>(shape_numel(shape), v),
                         requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape))
    throw ShapeError("from_data: " + std::to_string(data.size()) +
                     " values for shape " + shape_str(shape));
  return Tensor(new_node(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(new_node(Shape{}, std::vector<double>{v}, requires_grad));
}

double Tensor::item() const {
  if (numel() != 1) throw NotScalar("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(new_node(node_->shape, node_->value, false));
}

Tensor Tensor::clone() const {
  return Tensor(new_node(node_->shape, node_->value, node_->requires_grad));
}

// ---- backward driver --------------------------------------------------------

void backward(const Tensor& loss) {
  auto root = loss.node();
  if (!root || root->numel() != 1)
    throw NotScalar("backward requires a scalar loss");
  if (!root->requires_grad) return;

  // iterative post-order DFS
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t child = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get()});
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.child < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.child++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // fresh gradients for interior nodes; leaves accumulate across calls
  for (TensorNode* n : order)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);

  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->backward_fn(*n);
      std::vector<double>().swap(n->grad);  // interior grad no longer needed
    }
  }
}

// ---- gemm -------------------------------------------------------------------

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 2)
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 2)
  for (int i = 0; i < m; ++i) {
    const double* __restrict arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* __restrict brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate) {
#pragma omp parallel for schedule(static) if (m > 2)
  for (int i = 0; i < m; ++i) {
    double* __restrict crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<size_t>(p) * m + i];
      const double* __restrict brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// ---- elementwise ------------------------------------------------------------

namespace {

// Unary op template: fn computes y and writes dy/dx into dval.
template <class Fn>
Tensor unary_op(const Tensor& a, Fn fn) {
  const auto& av = a.node()->value;
  std::vector<double> out(av.size());
  std::vector<double> dval;
  bool rg = a.requires_grad();
  if (rg) dval.resize(av.size());
  double d = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    out[i] = fn(av[i], d);
    if (rg) dval[i] = d;
  }
  auto pa = a.node();
  return make_result(a.shape(), std::move(out), {&a},
                     [pa, dval = std::move(dval)](TensorNode& self) {
                       auto& g = pa->grad;
                       for (size_t i = 0; i < dval.size(); ++i)
                         g[i] += self.grad[i] * dval[i];
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [pa, pb](TensorNode& self) {
                       if (pa->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pa->grad[i] += self.grad[i];
                       if (pb->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pb->grad[i] += self.grad[i];
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [pa, pb](TensorNode& self) {
                       if (pa->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pa->grad[i] += self.grad[i];
                       if (pb->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pb->grad[i] -= self.grad[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  auto pa = a.node(), pb = b.node();
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [pa, pb](TensorNode& self) {
                       if (pa->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pa->grad[i] += self.grad[i] * pb->value[i];
                       if (pb->requires_grad)
                         for (size_t i = 0; i < self.grad.size(); ++i)
                           pb->grad[i] += self.grad[i] * pa->value[i];
                     });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    d = -1.0;
    return -x;
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(a, [c](double x, double& d) {
    d = c;
    return c * x;
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x, double& d) {
    d = 1.0;
    return x + c;
  });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    d = 2.0 * x;
    return x * x;
  });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    double y = std::sqrt(x);
    d = y > 0 ? 0.5 / y : 0.0;
    return y;
  });
}

Tensor log_t(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    d = 1.0 / x;
    return std::log(x);
  });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    double y = std::exp(x);
    d = y;
    return y;
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    d = x > 0 ? 1.0 : 0.0;
    return x > 0 ? x : 0.0;
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    double y = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    d = y * (1.0 - y);
    return y;
  });
}

Tensor mish(const Tensor& a) {
  // x * tanh(softplus(x)), softplus computed overflow-safe
  return unary_op(a, [](double x, double& d) {
    double sp = x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
    double t = std::tanh(sp);
    double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
    d = t + x * (1.0 - t * t) * sig;
    return x * t;
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary_op(a, [lo, hi](double x, double& d) {
    if (x < lo) {
      d = 0.0;
      return lo;
    }
    if (x > hi) {
      d = 0.0;
      return hi;
    }
    d = 1.0;
    return x;
  });
}

Tensor reciprocal(const Tensor& a) {
  return unary_op(a, [](double x, double& d) {
    double y = 1.0 / x;
    d = -y * y;
    return y;
  });
}

// ---- shape / assembly ---------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto pa = a.node();
  return make_result(shape, pa->value, {&a}, [pa](TensorNode& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
  });
}

Tensor flatten2(const Tensor& a) {
  if (a.ndim() < 1) throw ShapeError("flatten2 on scalar");
  int b = a.dim(0);
  int rest = static_cast<int>(a.numel() / b);
  return reshape(a, {b, rest});
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int64_t rows = 1;
  for (int d : lead) rows *= d;
  int total_c = 0;
  for (const Tensor& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw ShapeError("concat: leading dims differ: " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    total_c += p.shape().back();
  }
  Shape out_shape = lead;
  out_shape.push_back(total_c);
  std::vector<double> out(rows * total_c);
  int off = 0;
  for (const Tensor& p : parts) {
    int c = p.shape().back();
    const auto& pv = p.node()->value;
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(&out[r * total_c + off], &pv[r * c], c * sizeof(double));
    off += c;
  }

  bool rg = false;
  for (const Tensor& p : parts) rg = rg || p.requires_grad();
  auto n = new_node(std::move(out_shape), std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<TensorNode>> ps;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
      ps.push_back(p.node());
      widths.push_back(p.shape().back());
    }
    n->parents = ps;
    n->backward_fn = [ps, widths, rows, total_c](TensorNode& self) {
      int off2 = 0;
      for (size_t k = 0; k < ps.size(); ++k) {
        int c = widths[k];
        if (ps[k]->requires_grad) {
          auto& g = ps[k]->grad;
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j)
              g[r * c + j] += self.grad[r * total_c + off2 + j];
        }
        off2 += c;
      }
    };
  }
  return Tensor(n);
}

Tensor slice_lastdim(const Tensor& a, int c0, int c1) {
  int c = a.shape().back();
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw ShapeError("slice_lastdim: [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") of " + std::to_string(c));
  int64_t rows = a.numel() / c;
  int w = c1 - c0;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(w);
  std::vector<double> out(rows * w);
  const auto& av = a.node()->value;
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(&out[r * w], &av[r * c + c0], w * sizeof(double));
  auto pa = a.node();
  return make_result(std::move(out_shape), std::move(out), {&a},
                     [pa, rows, w, c, c0](TensorNode& self) {
                       for (int64_t r = 0; r < rows; ++r)
                         for (int j = 0; j < w; ++j)
                           pa->grad[r * c + c0 + j] += self.grad[r * w + j];
                     });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  if (a.ndim() != 2) throw ShapeError("gather_rows needs 2-d input");
  int r = a.dim(0), c = a.dim(1);
  for (int i : idx)
    if (i < 0 || i >= r) throw ShapeError("gather_rows: index out of range");
  std::vector<double> out(idx.size() * c);
  const auto& av = a.node()->value;
  for (size_t k = 0; k < idx.size(); ++k)
    std::memcpy(&out[k * c], &av[static_cast<size_t>(idx[k]) * c], c * sizeof(double));
  auto pa = a.node();
  return make_result({static_cast<int>(idx.size()), c}, std::move(out), {&a},
                     [pa, idx, c](TensorNode& self) {
                       for (size_t k = 0; k < idx.size(); ++k) {
                         double* g = &pa->grad[static_cast<size_t>(idx[k]) * c];
                         const double* s = &self.grad[k * c];
                         for (int j = 0; j < c; ++j) g[j] += s[j];
                       }
                     });
}

Tensor replace_rows(const Tensor& a, const std::vector<int>& rows, const Tensor& row) {
  if (a.ndim() != 2 || row.ndim() != 1 || row.dim(0) != a.dim(1))
    throw ShapeError("replace_rows: " + shape_str(a.shape()) + " with row " +
                     shape_str(row.shape()));
  int c = a.dim(1);
  std::vector<double> out = a.node()->value;
  const auto& rv = row.node()->value;
  for (int r : rows) {
    if (r < 0 || r >= a.dim(0)) throw ShapeError("replace_rows: row out of range");
    std::memcpy(&out[static_cast<size_t>(r) * c], rv.data(), c * sizeof(double));
  }
  auto pa = a.node(), pr = row.node();
  return make_result(a.shape(), std::move(out), {&a, &row},
                     [pa, pr, rows, c](TensorNode& self) {
                       std::vector<char> replaced(pa->shape[0], 0);
                       for (int r : rows) replaced[r] = 1;
                       if (pa->requires_grad) {
                         for (int r = 0; r < pa->shape[0]; ++r) {
                           if (replaced[r]) continue;
                           double* g = &pa->grad[static_cast<size_t>(r) * c];
                           const double* s = &self.grad[static_cast<size_t>(r) * c];
                           for (int j = 0; j < c; ++j) g[j] += s[j];
                         }
                       }
                       if (pr->requires_grad) {
                         for (int r : rows) {
                           const double* s = &self.grad[static_cast<size_t>(r) * c];
                           for (int j = 0; j < c; ++j) pr->grad[j] += s[j];
                         }
                       }
                     });
}

Tensor assemble_rows(int n_rows, const std::vector<int>& source_row,
                     const Tensor& rows_src, const Tensor& fill) {
  if (static_cast<int>(source_row.size()) != n_rows)
    throw ShapeError("assemble_rows: mapping size mismatch");
  if (rows_src.ndim() != 2 || fill.ndim() != 1 || fill.dim(0) != rows_src.dim(1))
    throw ShapeError("assemble_rows: bad source shapes");
  int c = rows_src.dim(1);
  std::vector<double> out(static_cast<size_t>(n_rows) * c);
  const auto& sv = rows_src.node()->value;
  const auto& fv = fill.node()->value;
  for (int r = 0; r < n_rows; ++r) {
    int s = source_row[r];
    const double* src = s >= 0 ? &sv[static_cast<size_t>(s) * c] : fv.data();
    std::memcpy(&out[static_cast<size_t>(r) * c], src, c * sizeof(double));
  }
  auto ps = rows_src.node(), pf = fill.node();
  return make_result({n_rows, c}, std::move(out), {&rows_src, &fill},
                     [ps, pf, source_row, c](TensorNode& self) {
                       for (size_t r = 0; r < source_row.size(); ++r) {
                         const double* g = &self.grad[r * c];
                         int s = source_row[r];
                         if (s >= 0) {
                           if (!ps->requires_grad) continue;
                           double* d = &ps->grad[static_cast<size_t>(s) * c];
                           for (int j = 0; j < c; ++j) d[j] += g[j];
                         } else if (pf->requires_grad) {
                           for (int j = 0; j < c; ++j) pf->grad[j] += g[j];
                         }
                       }
                     });
}

Tensor repeat_rows(const Tensor& a, int times) {
  if (a.ndim() != 2) throw ShapeError("repeat_rows needs 2-d input");
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(a.dim(0)) * times);
  for (int r = 0; r < a.dim(0); ++r)
    for (int t = 0; t < times; ++t) idx.push_back(r);
  return gather_rows(a, idx);
}

// ---- reductions ---------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  auto pa = a.node();
  return make_result(Shape{}, {s}, {&a}, [pa](TensorNode& self) {
    double g = self.grad[0];
    for (auto& x : pa->grad) x += g;
  });
}

Tensor mean_all(const Tensor& a) {
  int64_t n = a.numel();
  if (n == 0) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  s /= static_cast<double>(n);
  auto pa = a.node();
  return make_result(Shape{}, {s}, {&a}, [pa, n](TensorNode& self) {
    double g = self.grad[0] / static_cast<double>(n);
    for (auto& x : pa->grad) x += g;
  });
}

Tensor rowwise_sum(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("rowwise_sum needs 2-d input");
  int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r, 0.0);
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i] += av[static_cast<size_t>(i) * c + j];
  auto pa = a.node();
  return make_result({r}, std::move(out), {&a}, [pa, r, c](TensorNode& self) {
    for (int i = 0; i < r; ++i) {
      double g = self.grad[i];
      double* d = &pa->grad[static_cast<size_t>(i) * c];
      for (int j = 0; j < c; ++j) d[j] += g;
    }
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "rowwise_dot");
  if (a.ndim() != 2) throw ShapeError("rowwise_dot needs 2-d input");
  int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r, 0.0);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[i] += av[static_cast<size_t>(i) * c + j] * bv[static_cast<size_t>(i) * c + j];
  auto pa = a.node(), pb = b.node();
  return make_result({r}, std::move(out), {&a, &b}, [pa, pb, r, c](TensorNode& self) {
    for (int i = 0; i < r; ++i) {
      double g = self.grad[i];
      if (pa->requires_grad)
        for (int j = 0; j < c; ++j)
          pa->grad[static_cast<size_t>(i) * c + j] += g * pb->value[static_cast<size_t>(i) * c + j];
      if (pb->requires_grad)
        for (int j = 0; j < c; ++j)
          pb->grad[static_cast<size_t>(i) * c + j] += g * pa->value[static_cast<size_t>(i) * c + j];
    }
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (a.ndim() != 2 || s.ndim() != 1 || s.dim(0) != a.dim(0))
    throw ShapeError("scale_rows: " + shape_str(a.shape()) + " by " + shape_str(s.shape()));
  int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(static_cast<size_t>(r) * c);
  const auto& av = a.node()->value;
  const auto& sv = s.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = av[static_cast<size_t>(i) * c + j] * sv[i];
  auto pa = a.node(), ps = s.node();
  return make_result(a.shape(), std::move(out), {&a, &s}, [pa, ps, r, c](TensorNode& self) {
    for (int i = 0; i < r; ++i) {
      if (pa->requires_grad) {
        double sv2 = ps->value[i];
        for (int j = 0; j < c; ++j)
          pa->grad[static_cast<size_t>(i) * c + j] += self.grad[static_cast<size_t>(i) * c + j] * sv2;
      }
      if (ps->requires_grad) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j)
          acc += self.grad[static_cast<size_t>(i) * c + j] * pa->value[static_cast<size_t>(i) * c + j];
        ps->grad[i] += acc;
      }
    }
  });
}

Tensor colwise_mean(const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError("colwise_mean needs 2-d input");
  int r = a.dim(0), c = a.dim(1);
  if (r == 0) throw ShapeError("colwise_mean of zero rows");
  std::vector<double> out(c, 0.0);
  const auto& av = a.node()->value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += av[static_cast<size_t>(i) * c + j];
  for (int j = 0; j < c; ++j) out[j] /= r;
  auto pa = a.node();
  return make_result({c}, std::move(out), {&a}, [pa, r, c](TensorNode& self) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[static_cast<size_t>(i) * c + j] += self.grad[j] / r;
  });
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  gemm_nn(m, n, k, a.node()->value.data(), b.node()->value.data(), out.data(), false);
  auto pa = a.node(), pb = b.node();
  return make_result({m, n}, std::move(out), {&a, &b}, [pa, pb, m, n, k](TensorNode& self) {
    if (pa->requires_grad)
      gemm_nt(m, k, n, self.grad.data(), pb->value.data(), pa->grad.data(), true);
    if (pb->requires_grad)
      gemm_tn(k, n, m, pa->value.data(), self.grad.data(), pb->grad.data(), true);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != w.dim(0)))
    throw ShapeError("linear: bias " + shape_str(b.shape()));
  int m = x.dim(0), in = x.dim(1), out_c = w.dim(0);
  std::vector<double> out(static_cast<size_t>(m) * out_c);
  gemm_nt(m, out_c, in, x.node()->value.data(), w.node()->value.data(), out.data(), false);
  if (b.defined()) {
    const auto& bv = b.node()->value;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < out_c; ++j) out[static_cast<size_t>(i) * out_c + j] += bv[j];
  }
  auto px = x.node(), pw = w.node(), pb = b.defined() ? b.node() : nullptr;
  Tensor result = make_result(
      {m, out_c}, std::move(out), {&x, &w, &b},
      [px, pw, pb, m, in, out_c](TensorNode& self) {
        if (px->requires_grad)
          gemm_nn(m, in, out_c, self.grad.data(), pw->value.data(), px->grad.data(), true);
        if (pw->requires_grad)
          gemm_tn(out_c, in, m, self.grad.data(), px->value.data(), pw->grad.data(), true);
        if (pb && pb->requires_grad) {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < out_c; ++j)
              pb->grad[j] += self.grad[static_cast<size_t>(i) * out_c + j];
        }
      });
  return result;
}

// ---- convolution ----------------------------------------------------------

namespace {

// im2col for kernel 3, stride 1, zero pad 1: (B,C,H,W) -> (B*H*W, C*9)
void im2col2d(const double* x, int b_count, int c_in, int h, int w, double* patches) {
  const size_t cols = static_cast<size_t>(c_in) * 9;
#pragma omp parallel for schedule(static) if (b_count > 1)
  for (int b = 0; b < b_count; ++b) {
    const double* xb = x + static_cast<size_t>(b) * c_in * h * w;
    double* pb = patches + static_cast<size_t>(b) * h * w * cols;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double* row = pb + (static_cast<size_t>(y) * w + xx) * cols;
        for (int ci = 0; ci < c_in; ++ci) {
          const double* xc = xb + static_cast<size_t>(ci) * h * w;
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y + dy;
            for (int dx = -1; dx <= 1; ++dx) {
              int xs = xx + dx;
              double v = (yy >= 0 && yy < h && xs >= 0 && xs < w)
                             ? xc[static_cast<size_t>(yy) * w + xs]
                             : 0.0;
              *row++ = v;
            }
          }
        }
      }
    }
  }
}

void col2im2d(const double* patches, int b_count, int c_in, int h, int w, double* dx) {
  const size_t cols = static_cast<size_t>(c_in) * 9;
#pragma omp parallel for schedule(static) if (b_count > 1)
  for (int b = 0; b < b_count; ++b) {
    double* xb = dx + static_cast<size_t>(b) * c_in * h * w;
    const double* pb = patches + static_cast<size_t>(b) * h * w * cols;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const double* row = pb + (static_cast<size_t>(y) * w + xx) * cols;
        for (int ci = 0; ci < c_in; ++ci) {
          double* xc = xb + static_cast<size_t>(ci) * h * w;
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y + dy;
            for (int dx2 = -1; dx2 <= 1; ++dx2) {
              int xs = xx + dx2;
              double v = *row++;
              if (yy >= 0 && yy < h && xs >= 0 && xs < w)
                xc[static_cast<size_t>(yy) * w + xs] += v;
            }
          }
        }
      }
    }
  }
}

void im2col1d(const double* x, int b_count, int c_in, int s, double* patches) {
  const size_t cols = static_cast<size_t>(c_in) * 3;
  for (int b = 0; b < b_count; ++b) {
    const double* xb = x + static_cast<size_t>(b) * c_in * s;
    double* pb = patches + static_cast<size_t>(b) * s * cols;
    for (int t = 0; t < s; ++t) {
      double* row = pb + static_cast<size_t>(t) * cols;
      for (int ci = 0; ci < c_in; ++ci) {
        const double* xc = xb + static_cast<size_t>(ci) * s;
        for (int dt = -1; dt <= 1; ++dt) {
          int tt = t + dt;
          *row++ = (tt >= 0 && tt < s) ? xc[tt] : 0.0;
        }
      }
    }
  }
}

void col2im1d(const double* patches, int b_count, int c_in, int s, double* dx) {
  const size_t cols = static_cast<size_t>(c_in) * 3;
  for (int b = 0; b < b_count; ++b) {
    double* xb = dx + static_cast<size_t>(b) * c_in * s;
    const double* pb = patches + static_cast<size_t>(b) * s * cols;
    for (int t = 0; t < s; ++t) {
      const double* row = pb + static_cast<size_t>(t) * cols;
      for (int ci = 0; ci < c_in; ++ci) {
        double* xc = xb + static_cast<size_t>(ci) * s;
        for (int dt = -1; dt <= 1; ++dt) {
          int tt = t + dt;
          double v = *row++;
          if (tt >= 0 && tt < s) xc[tt] += v;
        }
      }
    }
  }
}

// (rows, Cout) -> (B, Cout, spatial) channel-first scatter
void rows_to_chw(const double* y, int b_count, int c_out, int spatial, double* out) {
  for (int b = 0; b < b_count; ++b)
    for (int t = 0; t < spatial; ++t) {
      const double* row = y + (static_cast<size_t>(b) * spatial + t) * c_out;
      for (int co = 0; co < c_out; ++co)
        out[(static_cast<size_t>(b) * c_out + co) * spatial + t] = row[co];
    }
}

void chw_to_rows(const double* x, int b_count, int c_out, int spatial, double* rows) {
  for (int b = 0; b < b_count; ++b)
    for (int t = 0; t < spatial; ++t) {
      double* row = rows + (static_cast<size_t>(b) * spatial + t) * c_out;
      for (int co = 0; co < c_out; ++co)
        row[co] = x[(static_cast<size_t>(b) * c_out + co) * spatial + t];
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 4) throw ShapeError("conv2d: input " + shape_str(x.shape()));
  if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(1) != x.dim(1))
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " for input " +
                     shape_str(x.shape()));
  int bs = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3), c_out = w.dim(0);
  if (b.ndim() != 1 || b.dim(0) != c_out) throw ShapeError("conv2d: bias shape");
  const size_t rows = static_cast<size_t>(bs) * h * wd;
  const size_t cols = static_cast<size_t>(c_in) * 9;
  std::vector<double> patches(rows * cols);
  im2col2d(x.node()->value.data(), bs, c_in, h, wd, patches.data());
  std::vector<double> y(rows * c_out);
  gemm_nt(static_cast<int>(rows), c_out, static_cast<int>(cols), patches.data(),
          w.node()->value.data(), y.data(), false);
  const auto& bv = b.node()->value;
  for (size_t r = 0; r < rows; ++r)
    for (int co = 0; co < c_out; ++co) y[r * c_out + co] += bv[co];
  std::vector<double> out(static_cast<size_t>(bs) * c_out * h * wd);
  rows_to_chw(y.data(), bs, c_out, h * wd, out.data());
  std::vector<double>().swap(patches);  // recomputed in backward

  auto px = x.node(), pw = w.node(), pb = b.node();
  return make_result(
      {bs, c_out, h, wd}, std::move(out), {&x, &w, &b},
      [px, pw, pb, bs, c_in, h, wd, c_out](TensorNode& self) {
        const size_t rows2 = static_cast<size_t>(bs) * h * wd;
        const size_t cols2 = static_cast<size_t>(c_in) * 9;
        std::vector<double> dy(rows2 * c_out);
        chw_to_rows(self.grad.data(), bs, c_out, h * wd, dy.data());
        if (pb->requires_grad) {
          for (size_t r = 0; r < rows2; ++r)
            for (int co = 0; co < c_out; ++co) pb->grad[co] += dy[r * c_out + co];
        }
        if (pw->requires_grad || px->requires_grad) {
          std::vector<double> patches2(rows2 * cols2);
          im2col2d(px->value.data(), bs, c_in, h, wd, patches2.data());
          if (pw->requires_grad)
            gemm_tn(c_out, static_cast<int>(cols2), static_cast<int>(rows2), dy.data(),
                    patches2.data(), pw->grad.data(), true);
          if (px->requires_grad) {
            std::vector<double> dpatch(rows2 * cols2);
            gemm_nn(static_cast<int>(rows2), static_cast<int>(cols2), c_out, dy.data(),
                    pw->value.data(), dpatch.data(), false);
            col2im2d(dpatch.data(), bs, c_in, h, wd, px->grad.data());
          }
        }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 3) throw ShapeError("conv1d: input " + shape_str(x.shape()));
  if (w.ndim() != 3 || w.dim(2) != 3 || w.dim(1) != x.dim(1))
    throw ShapeError("conv1d: weight " + shape_str(w.shape()) + " for input " +
                     shape_str(x.shape()));
  int bs = x.dim(0), c_in = x.dim(1), s = x.dim(2), c_out = w.dim(0);
  if (b.ndim() != 1 || b.dim(0) != c_out) throw ShapeError("conv1d: bias shape");
  const size_t rows = static_cast<size_t>(bs) * s;
  const size_t cols = static_cast<size_t>(c_in) * 3;
  std::vector<double> patches(rows * cols);
  im2col1d(x.node()->value.data(), bs, c_in, s, patches.data());
  std::vector<double> y(rows * c_out);
  gemm_nt(static_cast<int>(rows), c_out, static_cast<int>(cols), patches.data(),
          w.node()->value.data(), y.data(), false);
  const auto& bv = b.node()->value;
  for (size_t r = 0; r < rows; ++r)
    for (int co = 0; co < c_out; ++co) y[r * c_out + co] += bv[co];
  std::vector<double> out(static_cast<size_t>(bs) * c_out * s);
  rows_to_chw(y.data(), bs, c_out, s, out.data());

  auto px = x.node(), pw = w.node(), pb = b.node();
  return make_result(
      {bs, c_out, s}, std::move(out), {&x, &w, &b},
      [px, pw, pb, bs, c_in, s, c_out](TensorNode& self) {
        const size_t rows2 = static_cast<size_t>(bs) * s;
        const size_t cols2 = static_cast<size_t>(c_in) * 3;
        std::vector<double> dy(rows2 * c_out);
        chw_to_rows(self.grad.data(), bs, c_out, s, dy.data());
        if (pb->requires_grad) {
          for (size_t r = 0; r < rows2; ++r)
            for (int co = 0; co < c_out; ++co) pb->grad[co] += dy[r * c_out + co];
        }
        if (pw->requires_grad || px->requires_grad) {
          std::vector<double> patches2(rows2 * cols2);
          im2col1d(px->value.data(), bs, c_in, s, patches2.data());
          if (pw->requires_grad)
            gemm_tn(c_out, static_cast<int>(cols2), static_cast<int>(rows2), dy.data(),
                    patches2.data(), pw->grad.data(), true);
          if (px->requires_grad) {
            std::vector<double> dpatch(rows2 * cols2);
            gemm_nn(static_cast<int>(rows2), static_cast<int>(cols2), c_out, dy.data(),
                    pw->value.data(), dpatch.data(), false);
            col2im1d(dpatch.data(), bs, c_in, s, px->grad.data());
          }
        }
      });
}

// ---- normalization ----------------------------------------------------------

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training,
                 double momentum, double eps) {
  if (x.ndim() < 2) throw ShapeError("batchnorm: input " + shape_str(x.shape()));
  int bs = x.dim(0), c = x.dim(1);
  int64_t spatial = x.numel() / (static_cast<int64_t>(bs) * c);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw ShapeError("batchnorm: parameter size != channels");
  const int64_t n_per_c = static_cast<int64_t>(bs) * spatial;
  if (training && n_per_c < 2)
    throw ShapeError("batchnorm training mode needs >=2 samples per channel, got " +
                     std::to_string(n_per_c));

  const auto& xv = x.node()->value;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (int b = 0; b < bs; ++b)
      for (int ci = 0; ci < c; ++ci) {
        const double* p = &xv[(static_cast<size_t>(b) * c + ci) * spatial];
        double acc = 0.0;
        for (int64_t t = 0; t < spatial; ++t) acc += p[t];
        mean[ci] += acc;
      }
    for (int ci = 0; ci < c; ++ci) mean[ci] /= static_cast<double>(n_per_c);
    for (int b = 0; b < bs; ++b)
      for (int ci = 0; ci < c; ++ci) {
        const double* p = &xv[(static_cast<size_t>(b) * c + ci) * spatial];
        double acc = 0.0;
        for (int64_t t = 0; t < spatial; ++t) {
          double d = p[t] - mean[ci];
          acc += d * d;
        }
        var[ci] += acc;
      }
    for (int ci = 0; ci < c; ++ci) var[ci] /= static_cast<double>(n_per_c);
    auto rm = running_mean.raw();
    auto rv = running_var.raw();
    for (int ci = 0; ci < c; ++ci) {
      rm[ci] = momentum * rm[ci] + (1.0 - momentum) * mean[ci];
      rv[ci] = momentum * rv[ci] + (1.0 - momentum) * var[ci];
    }
  } else {
    const auto rm = running_mean.data();
    const auto rv = running_var.data();
    mean.assign(rm.begin(), rm.end());
    var.assign(rv.begin(), rv.end());
  }

  std::vector<double> inv_std(c);
  for (int ci = 0; ci < c; ++ci) inv_std[ci] = 1.0 / std::sqrt(var[ci] + eps);

  const auto& gv = gamma.node()->value;
  const auto& bev = beta.node()->value;
  std::vector<double> xhat(xv.size());
  std::vector<double> out(xv.size());
  for (int b = 0; b < bs; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = &xv[(static_cast<size_t>(b) * c + ci) * spatial];
      double* xh = &xhat[(static_cast<size_t>(b) * c + ci) * spatial];
      double* o = &out[(static_cast<size_t>(b) * c + ci) * spatial];
      for (int64_t t = 0; t < spatial; ++t) {
        xh[t] = (p[t] - mean[ci]) * inv_std[ci];
        o[t] = gv[ci] * xh[t] + bev[ci];
      }
    }

  auto px = x.node(), pg = gamma.node(), pbt = beta.node();
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [px, pg, pbt, bs, c, spatial, training, inv_std, xhat = std::move(xhat),
       n_per_c](TensorNode& self) {
        // per-channel reductions of dy and dy*xhat
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (int b = 0; b < bs; ++b)
          for (int ci = 0; ci < c; ++ci) {
            const double* g = &self.grad[(static_cast<size_t>(b) * c + ci) * spatial];
            const double* xh = &xhat[(static_cast<size_t>(b) * c + ci) * spatial];
            double a0 = 0.0, a1 = 0.0;
            for (int64_t t = 0; t < spatial; ++t) {
              a0 += g[t];
              a1 += g[t] * xh[t];
            }
            sum_dy[ci] += a0;
            sum_dy_xhat[ci] += a1;
          }
        if (pg->requires_grad)
          for (int ci = 0; ci < c; ++ci) pg->grad[ci] += sum_dy_xhat[ci];
        if (pbt->requires_grad)
          for (int ci = 0; ci < c; ++ci) pbt->grad[ci] += sum_dy[ci];
        if (px->requires_grad) {
          const double inv_n = 1.0 / static_cast<double>(n_per_c);
          for (int b = 0; b < bs; ++b)
            for (int ci = 0; ci < c; ++ci) {
              const double* g = &self.grad[(static_cast<size_t>(b) * c + ci) * spatial];
              const double* xh = &xhat[(static_cast<size_t>(b) * c + ci) * spatial];
              double* dx = &px->grad[(static_cast<size_t>(b) * c + ci) * spatial];
              double gm = pg->value[ci] * inv_std[ci];
              if (training) {
                for (int64_t t = 0; t < spatial; ++t)
                  dx[t] += gm * (g[t] - inv_n * sum_dy[ci] - inv_n * xh[t] * sum_dy_xhat[ci]);
              } else {
                for (int64_t t = 0; t < spatial; ++t) dx[t] += gm * g[t];
              }
            }
        }
      });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() < 1) throw ShapeError("layernorm on scalar");
  int d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layernorm: parameter size != last dim");
  int64_t rows = x.numel() / d;
  const auto& xv = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  std::vector<double> xhat(xv.size()), out(xv.size()), inv_std(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const double* p = &xv[r * d];
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += p[j];
    m /= d;
    double v = 0.0;
    for (int j = 0; j < d; ++j) {
      double diff = p[j] - m;
      v += diff * diff;
    }
    v /= d;
    double is = 1.0 / std::sqrt(v + eps);
    inv_std[r] = is;
    for (int j = 0; j < d; ++j) {
      xhat[r * d + j] = (p[j] - m) * is;
      out[r * d + j] = gv[j] * xhat[r * d + j] + bv[j];
    }
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [px, pg, pb, rows, d, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](TensorNode& self) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = &self.grad[r * d];
          const double* xh = &xhat[r * d];
          double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
          for (int j = 0; j < d; ++j) {
            double dyg = g[j] * pg->value[j];
            sum_dyg += dyg;
            sum_dyg_xhat += dyg * xh[j];
          }
          if (pg->requires_grad)
            for (int j = 0; j < d; ++j) pg->grad[j] += g[j] * xh[j];
          if (pb->requires_grad)
            for (int j = 0; j < d; ++j) pb->grad[j] += g[j];
          if (px->requires_grad) {
            for (int j = 0; j < d; ++j) {
              double dyg = g[j] * pg->value[j];
              px->grad[r * d + j] +=
                  inv_std[r] * (dyg - sum_dyg / d - xh[j] * sum_dyg_xhat / d);
            }
          }
        }
      });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("softmax_rows needs 2-d input");
  int r = x.dim(0), c = x.dim(1);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (int i = 0; i < r; ++i) {
    const double* p = &xv[static_cast<size_t>(i) * c];
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, p[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(p[j] - mx);
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = std::exp(p[j] - mx) / z;
  }
  auto px = x.node();
  std::vector<double> saved = out;
  return make_result(x.shape(), std::move(out), {&x},
                     [px, r, c, y = std::move(saved)](TensorNode& self) {
                       for (int i = 0; i < r; ++i) {
                         const double* g = &self.grad[static_cast<size_t>(i) * c];
                         const double* yr = &y[static_cast<size_t>(i) * c];
                         double dot = 0.0;
                         for (int j = 0; j < c; ++j) dot += g[j] * yr[j];
                         for (int j = 0; j < c; ++j)
                           px->grad[static_cast<size_t>(i) * c + j] += yr[j] * (g[j] - dot);
                       }
                     });
}

Tensor log_softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("log_softmax_rows needs 2-d input");
  int r = x.dim(0), c = x.dim(1);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (int i = 0; i < r; ++i) {
    const double* p = &xv[static_cast<size_t>(i) * c];
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, p[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(p[j] - mx);
    double lz = mx + std::log(z);
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = p[j] - lz;
  }
  auto px = x.node();
  std::vector<double> saved = out;
  return make_result(x.shape(), std::move(out), {&x},
                     [px, r, c, ls = std::move(saved)](TensorNode& self) {
                       for (int i = 0; i < r; ++i) {
                         const double* g = &self.grad[static_cast<size_t>(i) * c];
                         const double* l = &ls[static_cast<size_t>(i) * c];
                         double gs = 0.0;
                         for (int j = 0; j < c; ++j) gs += g[j];
                         for (int j = 0; j < c; ++j)
                           px->grad[static_cast<size_t>(i) * c + j] += g[j] - std::exp(l[j]) * gs;
                       }
                     });
}

Tensor adaptive_avg_pool(const Tensor& x) {
  if (x.ndim() < 3) throw ShapeError("adaptive_avg_pool: input " + shape_str(x.shape()));
  int bs = x.dim(0), c = x.dim(1);
  int64_t spatial = x.numel() / (static_cast<int64_t>(bs) * c);
  const auto& xv = x.node()->value;
  std::vector<double> out(static_cast<size_t>(bs) * c, 0.0);
  for (int b = 0; b < bs; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const double* p = &xv[(static_cast<size_t>(b) * c + ci) * spatial];
      double acc = 0.0;
      for (int64_t t = 0; t < spatial; ++t) acc += p[t];
      out[static_cast<size_t>(b) * c + ci] = acc / static_cast<double>(spatial);
    }
  auto px = x.node();
  return make_result({bs, c}, std::move(out), {&x}, [px, bs, c, spatial](TensorNode& self) {
    for (int b = 0; b < bs; ++b)
      for (int ci = 0; ci < c; ++ci) {
        double g = self.grad[static_cast<size_t>(b) * c + ci] / static_cast<double>(spatial);
        double* d = &px->grad[(static_cast<size_t>(b) * c + ci) * spatial];
        for (int64_t t = 0; t < spatial; ++t) d[t] += g;
      }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, RngStream* rng) {
  if (p < 0.0 || p >= 1.0) throw RangeError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  if (!rng) throw RangeError("dropout: training mode needs an RNG stream");
  const auto& xv = x.node()->value;
  std::vector<double> mask(xv.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < xv.size(); ++i)
    mask[i] = rng->next_double() >= p ? keep_scale : 0.0;
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  auto px = x.node();
  return make_result(x.shape(), std::move(out), {&x},
                     [px, mask = std::move(mask)](TensorNode& self) {
                       for (size_t i = 0; i < mask.size(); ++i)
                         px->grad[i] += self.grad[i] * mask[i];
                     });
}

// ---- graph aggregation -----------------------------------------------------

Tensor segment_reduce(const Tensor& values, const std::vector<int>& segment_of_row,
                      int n_segments, SegmentOp op) {
  if (values.ndim() != 2) throw ShapeError("segment_reduce needs 2-d input");
  int r = values.dim(0), d = values.dim(1);
  if (static_cast<int>(segment_of_row.size()) != r)
    throw ShapeError("segment_reduce: segment id per row required");
  for (int s : segment_of_row)
    if (s < 0 || s >= n_segments) throw ShapeError("segment_reduce: segment id out of range");

  const auto& xv = values.node()->value;
  std::vector<int> count(n_segments, 0);
  for (int s : segment_of_row) count[s]++;
  std::vector<double> out(static_cast<size_t>(n_segments) * d, 0.0);
  auto px = values.node();

  if (op == SegmentOp::Mean) {
    for (int i = 0; i < r; ++i) {
      int s = segment_of_row[i];
      const double* p = &xv[static_cast<size_t>(i) * d];
      double* o = &out[static_cast<size_t>(s) * d];
      for (int j = 0; j < d; ++j) o[j] += p[j];
    }
    for (int s = 0; s < n_segments; ++s)
      if (count[s] > 0) {
        double inv = 1.0 / count[s];
        double* o = &out[static_cast<size_t>(s) * d];
        for (int j = 0; j < d; ++j) o[j] *= inv;
      }
    return make_result({n_segments, d}, std::move(out), {&values},
                       [px, segment_of_row, count, d](TensorNode& self) {
                         for (size_t i = 0; i < segment_of_row.size(); ++i) {
                           int s = segment_of_row[i];
                           double inv = 1.0 / count[s];
                           const double* g = &self.grad[static_cast<size_t>(s) * d];
                           double* dst = &px->grad[i * d];
                           for (int j = 0; j < d; ++j) dst[j] += g[j] * inv;
                         }
                       });
  }

  if (op == SegmentOp::Max || op == SegmentOp::Min) {
    const bool is_max = op == SegmentOp::Max;
    std::vector<int> arg(static_cast<size_t>(n_segments) * d, -1);
    for (int i = 0; i < r; ++i) {
      int s = segment_of_row[i];
      const double* p = &xv[static_cast<size_t>(i) * d];
      double* o = &out[static_cast<size_t>(s) * d];
      int* a = &arg[static_cast<size_t>(s) * d];
      for (int j = 0; j < d; ++j) {
        if (a[j] < 0 || (is_max ? p[j] > o[j] : p[j] < o[j])) {
          o[j] = p[j];
          a[j] = i;
        }
      }
    }
    return make_result({n_segments, d}, std::move(out), {&values},
                       [px, arg = std::move(arg), n_segments, d](TensorNode& self) {
                         for (int s = 0; s < n_segments; ++s)
                           for (int j = 0; j < d; ++j) {
                             int i = arg[static_cast<size_t>(s) * d + j];
                             if (i >= 0)
                               px->grad[static_cast<size_t>(i) * d + j] +=
                                   self.grad[static_cast<size_t>(s) * d + j];
                           }
                       });
  }

  // Std: population std via mean of squares; sqrt gradient guarded at 0 so a
  // single-element segment contributes exactly 0 with zero gradient.
  std::vector<double> m1(static_cast<size_t>(n_segments) * d, 0.0);
  std::vector<double> m2(static_cast<size_t>(n_segments) * d, 0.0);
  for (int i = 0; i < r; ++i) {
    int s = segment_of_row[i];
    const double* p = &xv[static_cast<size_t>(i) * d];
    for (int j = 0; j < d; ++j) {
      m1[static_cast<size_t>(s) * d + j] += p[j];
      m2[static_cast<size_t>(s) * d + j] += p[j] * p[j];
    }
  }
  for (int s = 0; s < n_segments; ++s) {
    if (count[s] == 0) continue;
    double inv = 1.0 / count[s];
    for (int j = 0; j < d; ++j) {
      size_t k = static_cast<size_t>(s) * d + j;
      m1[k] *= inv;
      m2[k] *= inv;
      double var = m2[k] - m1[k] * m1[k];
      out[k] = var > 0 ? std::sqrt(var) : 0.0;
    }
  }
  std::vector<double> std_saved = out;
  return make_result(
      {n_segments, d}, std::move(out), {&values},
      [px, segment_of_row, count, d, m1 = std::move(m1),
       stds = std::move(std_saved)](TensorNode& self) {
        for (size_t i = 0; i < segment_of_row.size(); ++i) {
          int s = segment_of_row[i];
          double inv = 1.0 / count[s];
          const double* g = &self.grad[static_cast<size_t>(s) * d];
          const double* mu = &m1[static_cast<size_t>(s) * d];
          const double* sd = &stds[static_cast<size_t>(s) * d];
          const double* p = &px->value[i * d];
          double* dst = &px->grad[i * d];
          for (int j = 0; j < d; ++j) {
            if (sd[j] > 1e-15)
              dst[j] += g[j] * inv * (p[j] - mu[j]) / sd[j];
          }
        }
      });
}

}  // namespace brepmae
