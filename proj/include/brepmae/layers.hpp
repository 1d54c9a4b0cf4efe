#pragma once

#include <string>
#include <vector>

#include "brepmae/rng.hpp"
#include "brepmae/tensor.hpp"

namespace brepmae {

// Named parameter set of a model. Parameters are registered in construction
// order, which fixes both the checkpoint payload order and the init draw
// order, making runs reproducible from (seed, config).
class Registry {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<Entry>& params() const { return params_; }
  const std::vector<Entry>& buffers() const { return buffers_; }
  std::vector<Entry>& params() { return params_; }
  std::vector<Entry>& buffers() { return buffers_; }

  Tensor find_param(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
  int64_t count_params(const std::string& prefix) const;

  void zero_grad();
  // Deep snapshot / restore of parameter and buffer values.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  std::vector<Entry> params_;
  std::vector<Entry> buffers_;
};

// uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases
Tensor init_uniform_fan_in(const Shape& shape, int fan_in, RngStream& rng);

struct ForwardCtx {
  bool training = false;
  RngStream* rng = nullptr;  // dropout draws
};

struct LinearLayer {
  Tensor w, b;
  LinearLayer() = default;
  LinearLayer(Registry& reg, const std::string& prefix, int in, int out, RngStream& rng);
  Tensor forward(const Tensor& x) const { return linear(x, w, b); }
};

struct Conv2dLayer {
  Tensor w, b;
  Conv2dLayer() = default;
  Conv2dLayer(Registry& reg, const std::string& prefix, int c_in, int c_out, RngStream& rng);
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b); }
};

struct Conv1dLayer {
  Tensor w, b;
  Conv1dLayer() = default;
  Conv1dLayer(Registry& reg, const std::string& prefix, int c_in, int c_out, RngStream& rng);
  Tensor forward(const Tensor& x) const { return conv1d(x, w, b); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  BatchNormLayer() = default;
  BatchNormLayer(Registry& reg, const std::string& prefix, int channels);
  Tensor forward(const Tensor& x, bool training) {
    return batchnorm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
};

struct LayerNormLayer {
  Tensor gamma, beta;
  double eps = 1e-5;
  LayerNormLayer() = default;
  LayerNormLayer(Registry& reg, const std::string& prefix, int dim);
  Tensor forward(const Tensor& x) const { return layernorm(x, gamma, beta, eps); }
};

}  // namespace brepmae
