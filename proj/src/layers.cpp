#include "brepmae/layers.hpp"

#include <cmath>

#include "brepmae/error.hpp"

namespace brepmae {

Tensor Registry::add_param(const std::string& name, Tensor t) {
  for (const auto& e : params_)
    if (e.name == name) throw ShapeError("duplicate parameter name " + name);
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor Registry::add_buffer(const std::string& name, Tensor t) {
  for (const auto& e : buffers_)
    if (e.name == name) throw ShapeError("duplicate buffer name " + name);
  buffers_.push_back({name, t});
  return t;
}

Tensor Registry::find_param(const std::string& name) const {
  for (const auto& e : params_)
    if (e.name == name) return e.tensor;
  throw MissingNamespace("parameter not found: " + name);
}

bool Registry::has_prefix(const std::string& prefix) const {
  for (const auto& e : params_)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

int64_t Registry::count_params(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& e : params_)
    if (prefix.empty() || e.name.rfind(prefix, 0) == 0) n += e.tensor.numel();
  return n;
}

void Registry::zero_grad() {
  for (auto& e : params_) e.tensor.zero_grad();
}

std::vector<std::vector<double>> Registry::snapshot() const {
  std::vector<std::vector<double>> snap;
  snap.reserve(params_.size() + buffers_.size());
  for (const auto& e : params_)
    snap.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  for (const auto& e : buffers_)
    snap.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return snap;
}

void Registry::restore(const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params_.size() + buffers_.size())
    throw ShapeError("snapshot does not match registry layout");
  size_t k = 0;
  for (auto& e : params_) {
    auto dst = e.tensor.raw();
    std::copy(snap[k].begin(), snap[k].end(), dst.begin());
    ++k;
  }
  for (auto& e : buffers_) {
    auto dst = e.tensor.raw();
    std::copy(snap[k].begin(), snap[k].end(), dst.begin());
    ++k;
  }
}

Tensor init_uniform_fan_in(const Shape& shape, int fan_in, RngStream& rng) {
  double bound = std::sqrt(1.0 / fan_in);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(shape, std::move(data));
}

LinearLayer::LinearLayer(Registry& reg, const std::string& prefix, int in, int out,
                         RngStream& rng) {
  w = reg.add_param(prefix + ".weight", init_uniform_fan_in({out, in}, in, rng));
  b = reg.add_param(prefix + ".bias", Tensor::zeros({out}));
}

Conv2dLayer::Conv2dLayer(Registry& reg, const std::string& prefix, int c_in, int c_out,
                         RngStream& rng) {
  w = reg.add_param(prefix + ".weight",
                    init_uniform_fan_in({c_out, c_in, 3, 3}, c_in * 9, rng));
  b = reg.add_param(prefix + ".bias", Tensor::zeros({c_out}));
}

Conv1dLayer::Conv1dLayer(Registry& reg, const std::string& prefix, int c_in, int c_out,
                         RngStream& rng) {
  w = reg.add_param(prefix + ".weight",
                    init_uniform_fan_in({c_out, c_in, 3}, c_in * 3, rng));
  b = reg.add_param(prefix + ".bias", Tensor::zeros({c_out}));
}

BatchNormLayer::BatchNormLayer(Registry& reg, const std::string& prefix, int channels) {
  gamma = reg.add_param(prefix + ".gamma", Tensor::full({channels}, 1.0));
  beta = reg.add_param(prefix + ".beta", Tensor::zeros({channels}));
  running_mean = reg.add_buffer(prefix + ".running_mean", Tensor::zeros({channels}));
  running_var = reg.add_buffer(prefix + ".running_var", Tensor::full({channels}, 1.0));
}

LayerNormLayer::LayerNormLayer(Registry& reg, const std::string& prefix, int dim) {
  gamma = reg.add_param(prefix + ".gamma", Tensor::full({dim}, 1.0));
  beta = reg.add_param(prefix + ".beta", Tensor::zeros({dim}));
}

}  // namespace brepmae
