#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "brepmae/error.hpp"
#include "brepmae/rng.hpp"

namespace brepmae {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the reverse-mode tape. Values are contiguous row-major f64.
// The gradient buffer exists iff requires_grad; backward functions accumulate
// into parent gradients (+=) so repeated backward calls accumulate on leaves.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  bool is_leaf() const { return !backward_fn; }
  void ensure_grad() {
    if (requires_grad && grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int dim(int i) const { return node_->shape[i]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->value; }
  // Mutable access to a leaf's storage (parameters, buffers, fixture setup).
  std::span<double> raw() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_mut() { return node_->grad; }

  double item() const;
  double at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
  void set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    node_->ensure_grad();
  }

  // Leaf copy sharing no tape history; gradients never flow through it.
  Tensor detach() const;
  // Deep copy of values into a fresh leaf with the same requires_grad.
  Tensor clone() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- autograd driver -------------------------------------------------------

// Accumulates d loss / d leaf into every reachable leaf with requires_grad.
// Interior gradients are recomputed from scratch each call; leaf gradients
// accumulate across calls until zero_grad.
void backward(const Tensor& loss);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor mish(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor reciprocal(const Tensor& a);

// ---- shape / assembly ------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor flatten2(const Tensor& a);  // keep dim 0, flatten the rest
// concat along the last axis; all leading axes must match
Tensor concat_lastdim(const std::vector<Tensor>& parts);
// columns [c0,c1) of the last axis
Tensor slice_lastdim(const Tensor& a, int c0, int c1);

// rows of a 2-d tensor by index; indices may repeat (backward scatter-adds)
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
// copy of `a` with the given rows replaced by `row` (1-d, broadcast)
Tensor replace_rows(const Tensor& a, const std::vector<int>& rows, const Tensor& row);
// (n_rows, D) assembled from per-row sources: source_row[i] >= 0 picks that
// row of `rows_src`; -1 picks the shared 1-d `fill` vector.
Tensor assemble_rows(int n_rows, const std::vector<int>& source_row,
                     const Tensor& rows_src, const Tensor& fill);
// each row of `a` repeated `times` consecutively
Tensor repeat_rows(const Tensor& a, int times);

// ---- reductions ------------------------------------------------------------

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor rowwise_sum(const Tensor& a);             // (R,C) -> (R)
Tensor rowwise_dot(const Tensor& a, const Tensor& b);  // (R,C),(R,C) -> (R)
Tensor scale_rows(const Tensor& a, const Tensor& s);   // (R,C) * (R) broadcast
Tensor colwise_mean(const Tensor& a);            // (R,C) -> (C)

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);       // (m,k)x(k,n)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // (B,in),(out,in),(out)

// ---- convolution (kernel 3, stride 1, zero padding 1) -----------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);  // (B,Cin,H,W),(Cout,Cin,3,3)
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);  // (B,Cin,S),(Cout,Cin,3)

// ---- normalization / pooling / regularization ------------------------------

// BatchNorm over channel dim 1 of (B,C,...); training mode uses batch
// statistics and updates running buffers in place:
//   running <- momentum * running + (1 - momentum) * batch
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training,
                 double momentum = 0.9, double eps = 1e-5);
// LayerNorm over the last axis.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);
Tensor softmax_rows(const Tensor& x);      // (R,C) softmax per row
Tensor log_softmax_rows(const Tensor& x);  // (R,C)
Tensor adaptive_avg_pool(const Tensor& x);  // (B,C,spatial...) -> (B,C)
Tensor dropout(const Tensor& x, double p, bool training, RngStream* rng);

// ---- graph aggregation -----------------------------------------------------

enum class SegmentOp { Mean, Max, Min, Std };

// Rows of `values` grouped by segment id (0..n_segments-1); empty segments
// produce zero rows. Std is the population std with a zero-guarded sqrt so a
// single-element segment yields exactly 0.
Tensor segment_reduce(const Tensor& values, const std::vector<int>& segment_of_row,
                      int n_segments, SegmentOp op);

// ---- raw gemm (exposed for im2col reuse and benchmarks) ---------------------

// C(m,n) += A(m,k)*B(k,n) (accumulate=true) or overwrite
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate);
// C(m,n) += A(m,k)*B(n,k)^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate);
// C(m,n) += A(k,m)^T*B(k,n)
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c,
             bool accumulate);

}  // namespace brepmae
