#pragma once

// Layer graphs over the fixed vocabulary: static shape inference, parameter
// layout, forward with an activation cache, and reverse-mode backward.

#include "talkhead/kernels.hpp"
#include "talkhead/weight_store.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace talkhead {

enum class LayerKind {
  conv2d,
  tconv2d,
  conv1d,
  linear,
  instance_norm,
  leaky_relu,
  tanh,
  residual_block,
  reshape,
  concat,
  resize_bilinear,
  paste,
};

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  std::string name;                // parameter prefix; also used in diagnostics
  std::vector<std::string> inputs; // value names consumed
  std::string output;              // value name produced
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad_in = 0;
  std::int64_t pad_out = 0;
  std::int64_t c_in = 0;
  std::int64_t c_out = 0;
  bool bias = false;
  double slope = 0.2;
  Shape target;                    // reshape: full shape; resize: {H', W'}
  std::int64_t top = 0, left = 0;  // paste position in the destination
};

namespace layers {

LayerSpec conv2d(std::string name, std::string in, std::string out, std::int64_t c_in,
                 std::int64_t c_out, std::int64_t kernel, std::int64_t stride,
                 std::int64_t pad, bool bias = false);
LayerSpec tconv2d(std::string name, std::string in, std::string out, std::int64_t c_in,
                  std::int64_t c_out, std::int64_t kernel, std::int64_t stride,
                  std::int64_t pad, std::int64_t pad_out, bool bias = false);
LayerSpec conv1d(std::string name, std::string in, std::string out, std::int64_t c_in,
                 std::int64_t c_out, std::int64_t kernel, std::int64_t pad = 0,
                 bool bias = true);
LayerSpec linear(std::string name, std::string in, std::string out, std::int64_t n_in,
                 std::int64_t n_out, bool bias = true);
LayerSpec instance_norm(std::string name, std::string in, std::string out,
                        std::int64_t channels);
LayerSpec leaky_relu(std::string name, std::string in, std::string out, double slope = 0.2);
LayerSpec tanh(std::string name, std::string in, std::string out);
LayerSpec residual_block(std::string name, std::string in, std::string out,
                         std::int64_t channels);
LayerSpec reshape(std::string name, std::string in, std::string out, Shape target);
LayerSpec concat(std::string name, std::vector<std::string> ins, std::string out);
LayerSpec resize_bilinear(std::string name, std::string in, std::string out,
                          std::int64_t height, std::int64_t width);
LayerSpec paste(std::string name, std::string dst, std::string src, std::string out,
                std::int64_t top, std::int64_t left);

} // namespace layers

struct PortSpec {
  std::string name;
  Shape shape;
};

struct ParameterSlot {
  std::string name;
  Shape shape;
  enum class Init { normal, ones, zeros } init = Init::normal;
};

/// An ordered layer list with named input ports and named output values.
class NetworkSpec {
public:
  std::string name;
  std::vector<PortSpec> inputs;
  std::vector<LayerSpec> layers;
  std::vector<std::string> outputs;

  NetworkSpec &add(LayerSpec layer) {
    layers.push_back(std::move(layer));
    return *this;
  }

  /// Shapes of every value (ports and layer outputs). Throws a shape error
  /// naming the first layer whose inputs do not compose.
  std::map<std::string, Shape> infer_shapes() const;

  /// Parameter slots in declaration order.
  std::vector<ParameterSlot> parameter_slots() const;

  std::int64_t parameter_count() const;

  const PortSpec &input(const std::string &port) const;
};

/// Slots owned by a single layer (empty for parameter-free kinds).
std::vector<ParameterSlot> layer_parameter_slots(const LayerSpec &layer);

/// Shape produced by `layer` from the given input shapes.
Shape infer_layer_shape(const LayerSpec &layer, const std::vector<Shape> &in);

/// Conv weights and linear weights ~ normal(0, stddev); norm affine at (1, 0);
/// biases at 0. Deterministic given the seed.
template <typename T>
BasicWeightStore<T> init_parameters(const NetworkSpec &net, std::uint64_t seed,
                                    double stddev = 0.02) {
  BasicWeightStore<T> store;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (const auto &slot : net.parameter_slots()) {
    BasicTensor<T> t(slot.shape);
    switch (slot.init) {
    case ParameterSlot::Init::normal:
      for (auto &v : t.data())
        v = static_cast<T>(normal(rng));
      break;
    case ParameterSlot::Init::ones:
      t.fill(T{1});
      break;
    case ParameterSlot::Init::zeros:
      break;
    }
    store.set(slot.name, std::move(t));
  }
  return store;
}

template <typename T> struct LayerCache {
  std::vector<BasicTensor<T>> saved;
  std::vector<std::vector<T>> stats;
};

/// Every value computed by a forward pass plus what backward needs.
template <typename T> struct Activations {
  std::map<std::string, BasicTensor<T>> values;
  std::vector<LayerCache<T>> caches;

  const BasicTensor<T> &at(const std::string &name) const {
    auto it = values.find(name);
    if (it == values.end())
      fail(ErrorKind::usage, "no activation named '" + name + "'");
    return it->second;
  }
};

template <typename T> using TensorMap = std::map<std::string, BasicTensor<T>>;

template <typename T> struct ForwardOptions {
  /// Values replaced right after the producing layer runs (probing).
  const TensorMap<T> *overrides = nullptr;
  bool check_finite = true;
};

template <typename T> struct Gradients {
  BasicWeightStore<T> params;
  TensorMap<T> inputs;
};

struct BackwardOptions {
  bool param_grads = true;
  bool input_grads = true;
};

namespace detail {

inline kernels::ConvGeometry conv_geometry(const LayerSpec &l, const Shape &in) {
  kernels::ConvGeometry g;
  if (l.kind == LayerKind::conv1d) {
    g.channels = in[0];
    g.height = 1;
    g.width = in[1];
    g.kernel_h = 1;
    g.kernel_w = l.kernel;
    g.stride_h = 1;
    g.stride_w = l.stride;
    g.pad_h = 0;
    g.pad_w = l.pad_in;
  } else {
    g.channels = in[0];
    g.height = in[1];
    g.width = in[2];
    g.kernel_h = g.kernel_w = l.kernel;
    g.stride_h = g.stride_w = l.stride;
    g.pad_h = g.pad_w = l.pad_in;
  }
  return g;
}

// tconv: geometry of the adjoint convolution from output space to input space.
inline kernels::ConvGeometry tconv_geometry(const LayerSpec &l, const Shape &out) {
  kernels::ConvGeometry g;
  g.channels = out[0];
  g.height = out[1];
  g.width = out[2];
  g.kernel_h = g.kernel_w = l.kernel;
  g.stride_h = g.stride_w = l.stride;
  g.pad_h = g.pad_w = l.pad_in;
  return g;
}

template <typename T>
const BasicTensor<T> *optional_param(const BasicWeightStore<T> &p, const std::string &name,
                                     bool present) {
  return present ? &p.get(name) : nullptr;
}

template <typename T>
BasicTensor<T> conv_like_forward(const LayerSpec &l, const BasicWeightStore<T> &p,
                                 const BasicTensor<T> &x, const std::string &prefix,
                                 bool bias) {
  const auto &w = p.get(prefix + ".weight");
  const auto *b = optional_param(p, prefix + ".bias", bias);
  if (l.kind == LayerKind::tconv2d) {
    const Shape out = infer_layer_shape(l, {x.shape()});
    return kernels::tconv2d_forward(x, w, b, tconv_geometry(l, out), l.c_in);
  }
  const auto g = conv_geometry(l, x.shape());
  auto y = kernels::conv2d_forward(x, w, b, g, l.c_out);
  if (l.kind == LayerKind::conv1d)
    return y.reshaped({l.c_out, g.out_width()});
  return y;
}

template <typename T>
void conv_like_backward(const LayerSpec &l, const BasicWeightStore<T> &p,
                        const BasicTensor<T> &x, const BasicTensor<T> &dy,
                        const std::string &prefix, bool bias, BasicWeightStore<T> *grads,
                        BasicTensor<T> *dx) {
  const auto &w = p.get(prefix + ".weight");
  BasicTensor<T> *dw = grads ? &grads->get(prefix + ".weight") : nullptr;
  BasicTensor<T> *db = (grads && bias) ? &grads->get(prefix + ".bias") : nullptr;
  if (l.kind == LayerKind::tconv2d) {
    kernels::tconv2d_backward(x, w, tconv_geometry(l, dy.shape()), l.c_in, dy, dw, db, dx);
    return;
  }
  const auto g = conv_geometry(l, x.shape());
  if (l.kind == LayerKind::conv1d) {
    const auto dy3 = dy.reshaped({dy.dim(0), 1, dy.dim(1)});
    const auto x3 = x.reshaped({x.dim(0), 1, x.dim(1)});
    BasicTensor<T> dx3;
    if (dx)
      dx3 = BasicTensor<T>(x3.shape());
    kernels::conv2d_backward(x3, w, g, l.c_out, dy3, dw, db, dx ? &dx3 : nullptr);
    if (dx)
      *dx = dx3.reshaped(x.shape());
    return;
  }
  kernels::conv2d_backward(x, w, g, l.c_out, dy, dw, db, dx);
}

template <typename T>
BasicTensor<T> residual_forward(const LayerSpec &l, const BasicWeightStore<T> &p,
                                const BasicTensor<T> &x, LayerCache<T> &cache) {
  LayerSpec conv = l;
  conv.kind = LayerKind::conv2d;
  conv.kernel = 3;
  conv.stride = 1;
  conv.pad_in = 1;
  const T slope = static_cast<T>(l.slope);
  auto a1 = conv_like_forward(conv, p, x, l.name + ".conv_a", false);
  BasicTensor<T> xn1, xn2;
  std::vector<T> istd1, istd2;
  auto r1 = kernels::instance_norm_forward(a1, p.get(l.name + ".norm_a.gamma"),
                                           p.get(l.name + ".norm_a.beta"), xn1, istd1);
  auto h1 = kernels::leaky_relu_forward(r1, slope);
  auto a2 = conv_like_forward(conv, p, h1, l.name + ".conv_b", false);
  auto y = kernels::instance_norm_forward(a2, p.get(l.name + ".norm_b.gamma"),
                                          p.get(l.name + ".norm_b.beta"), xn2, istd2);
  y += x;
  cache.saved = {std::move(xn1), std::move(r1), std::move(h1), std::move(xn2)};
  cache.stats = {std::move(istd1), std::move(istd2)};
  return y;
}

template <typename T>
void residual_backward(const LayerSpec &l, const BasicWeightStore<T> &p,
                       const BasicTensor<T> &x, const LayerCache<T> &cache,
                       const BasicTensor<T> &dy, BasicWeightStore<T> *grads,
                       BasicTensor<T> *dx) {
  LayerSpec conv = l;
  conv.kind = LayerKind::conv2d;
  conv.kernel = 3;
  conv.stride = 1;
  conv.pad_in = 1;
  const T slope = static_cast<T>(l.slope);
  const auto &xn1 = cache.saved[0];
  const auto &r1 = cache.saved[1];
  const auto &h1 = cache.saved[2];
  const auto &xn2 = cache.saved[3];
  auto g = [&](const std::string &n) -> BasicTensor<T> * {
    return grads ? &grads->get(l.name + n) : nullptr;
  };
  BasicTensor<T> da2(dy.shape());
  kernels::instance_norm_backward(xn2, cache.stats[1], p.get(l.name + ".norm_b.gamma"), dy,
                                  g(".norm_b.gamma"), g(".norm_b.beta"), &da2);
  BasicTensor<T> dh1(h1.shape());
  conv_like_backward(conv, p, h1, da2, l.name + ".conv_b", false, grads, &dh1);
  auto dr1 = kernels::leaky_relu_backward(r1, slope, dh1);
  BasicTensor<T> da1(dr1.shape());
  kernels::instance_norm_backward(xn1, cache.stats[0], p.get(l.name + ".norm_a.gamma"), dr1,
                                  g(".norm_a.gamma"), g(".norm_a.beta"), &da1);
  if (dx) {
    *dx = BasicTensor<T>(x.shape());
    conv_like_backward(conv, p, x, da1, l.name + ".conv_a", false, grads, dx);
    *dx += dy;
  } else if (grads) {
    conv_like_backward(conv, p, x, da1, l.name + ".conv_a", false, grads,
                       static_cast<BasicTensor<T> *>(nullptr));
  }
}

template <typename T>
BasicTensor<T> layer_forward(const LayerSpec &l, const BasicWeightStore<T> &p,
                             const std::vector<const BasicTensor<T> *> &in,
                             LayerCache<T> &cache) {
  const auto &x = *in.front();
  switch (l.kind) {
  case LayerKind::conv2d:
  case LayerKind::tconv2d:
  case LayerKind::conv1d:
    return conv_like_forward(l, p, x, l.name, l.bias);
  case LayerKind::linear:
    return kernels::linear_forward(x, p.get(l.name + ".weight"),
                                   optional_param(p, l.name + ".bias", l.bias), l.c_out);
  case LayerKind::instance_norm: {
    BasicTensor<T> xn;
    std::vector<T> istd;
    auto y = kernels::instance_norm_forward(x, p.get(l.name + ".gamma"),
                                            p.get(l.name + ".beta"), xn, istd);
    cache.saved = {std::move(xn)};
    cache.stats = {std::move(istd)};
    return y;
  }
  case LayerKind::leaky_relu:
    return kernels::leaky_relu_forward(x, static_cast<T>(l.slope));
  case LayerKind::tanh:
    return kernels::tanh_forward(x);
  case LayerKind::residual_block:
    return residual_forward(l, p, x, cache);
  case LayerKind::reshape:
    return x.reshaped(l.target);
  case LayerKind::concat:
    return kernels::concat_channels(in);
  case LayerKind::resize_bilinear:
    return kernels::resize_bilinear_forward(x, l.target[0], l.target[1]);
  case LayerKind::paste:
    return kernels::paste_forward(x, *in[1], l.top, l.left);
  }
  fail(ErrorKind::usage, "unhandled layer kind");
}

// Writes gradients for each input into `dxs` (empty tensors where not needed).
template <typename T>
void layer_backward(const LayerSpec &l, const BasicWeightStore<T> &p,
                    const std::vector<const BasicTensor<T> *> &in, const BasicTensor<T> &y,
                    const LayerCache<T> &cache, const BasicTensor<T> &dy,
                    BasicWeightStore<T> *grads, const std::vector<bool> &want,
                    std::vector<BasicTensor<T>> &dxs) {
  const auto &x = *in.front();
  dxs.assign(in.size(), BasicTensor<T>());
  const bool want0 = want.front();
  switch (l.kind) {
  case LayerKind::conv2d:
  case LayerKind::tconv2d:
  case LayerKind::conv1d: {
    if (want0)
      dxs[0] = BasicTensor<T>(x.shape());
    conv_like_backward(l, p, x, dy, l.name, l.bias, grads, want0 ? &dxs[0] : nullptr);
    return;
  }
  case LayerKind::linear: {
    if (want0)
      dxs[0] = BasicTensor<T>(x.shape());
    kernels::linear_backward(x, p.get(l.name + ".weight"), dy,
                             grads ? &grads->get(l.name + ".weight") : nullptr,
                             (grads && l.bias) ? &grads->get(l.name + ".bias") : nullptr,
                             want0 ? &dxs[0] : nullptr);
    return;
  }
  case LayerKind::instance_norm: {
    if (want0)
      dxs[0] = BasicTensor<T>(x.shape());
    kernels::instance_norm_backward(cache.saved[0], cache.stats[0], p.get(l.name + ".gamma"),
                                    dy, grads ? &grads->get(l.name + ".gamma") : nullptr,
                                    grads ? &grads->get(l.name + ".beta") : nullptr,
                                    want0 ? &dxs[0] : nullptr);
    return;
  }
  case LayerKind::leaky_relu:
    if (want0)
      dxs[0] = kernels::leaky_relu_backward(x, static_cast<T>(l.slope), dy);
    return;
  case LayerKind::tanh:
    if (want0)
      dxs[0] = kernels::tanh_backward(y, dy);
    return;
  case LayerKind::residual_block:
    residual_backward(l, p, x, cache, dy, grads, want0 ? &dxs[0] : nullptr);
    return;
  case LayerKind::reshape:
    if (want0)
      dxs[0] = dy.reshaped(x.shape());
    return;
  case LayerKind::concat: {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      const auto n = in[i]->size();
      if (want[i]) {
        std::vector<T> part(dy.storage().begin() + static_cast<std::ptrdiff_t>(offset),
                            dy.storage().begin() + static_cast<std::ptrdiff_t>(offset + n));
        dxs[i] = BasicTensor<T>(in[i]->shape(), std::move(part));
      }
      offset += n;
    }
    return;
  }
  case LayerKind::resize_bilinear:
    if (want0)
      dxs[0] = kernels::resize_bilinear_backward(x.shape(), dy);
    return;
  case LayerKind::paste: {
    BasicTensor<T> ddst, dsrc;
    kernels::paste_backward(in[1]->shape(), l.top, l.left, dy, ddst, dsrc);
    if (want[0])
      dxs[0] = std::move(ddst);
    if (want[1])
      dxs[1] = std::move(dsrc);
    return;
  }
  }
}

} // namespace detail

/// Runs the graph. Inputs must match the declared port shapes exactly.
template <typename T>
Activations<T> forward(const NetworkSpec &net, const BasicWeightStore<T> &params,
                       const TensorMap<T> &inputs, const ForwardOptions<T> &options = {}) {
  Activations<T> act;
  for (const auto &port : net.inputs) {
    auto it = inputs.find(port.name);
    if (it == inputs.end())
      fail(ErrorKind::shape, net.name + ": missing input '" + port.name + "'");
    if (it->second.shape() != port.shape)
      fail(ErrorKind::shape, net.name + ": input '" + port.name + "' has shape " +
                                 shape_string(it->second.shape()) + ", expected " +
                                 shape_string(port.shape));
    act.values[port.name] = it->second;
  }
  act.caches.resize(net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto &layer = net.layers[li];
    std::vector<const BasicTensor<T> *> in;
    std::vector<Shape> in_shapes;
    for (const auto &name : layer.inputs) {
      auto it = act.values.find(name);
      if (it == act.values.end())
        fail(ErrorKind::shape, "layer '" + layer.name + "': input value '" + name +
                                   "' has not been produced");
      in.push_back(&it->second);
      in_shapes.push_back(it->second.shape());
    }
    const Shape expected = infer_layer_shape(layer, in_shapes);
    auto y = detail::layer_forward(layer, params, in, act.caches[li]);
    if (options.overrides) {
      auto ov = options.overrides->find(layer.output);
      if (ov != options.overrides->end()) {
        require(ov->second.shape() == expected, ErrorKind::shape,
                "override for '" + layer.output + "' has wrong shape");
        y = ov->second;
      }
    }
    act.values[layer.output] = std::move(y);
  }
  if (options.check_finite) {
    for (const auto &name : net.outputs) {
      if (!act.at(name).all_finite())
        fail(ErrorKind::numeric_fault, net.name + ": non-finite values in output '" + name + "'");
    }
  }
  return act;
}

/// Reverse pass. `output_grads` may name any produced value, not only ports.
template <typename T>
Gradients<T> backward(const NetworkSpec &net, const BasicWeightStore<T> &params,
                      const Activations<T> &act, const TensorMap<T> &output_grads,
                      const BackwardOptions &options = {}) {
  if (act.caches.size() != net.layers.size())
    fail(ErrorKind::usage, net.name + ": backward called without a matching forward cache");
  Gradients<T> out;
  if (options.param_grads) {
    for (const auto &slot : net.parameter_slots())
      out.params.set(slot.name, BasicTensor<T>(slot.shape));
  }
  std::set<std::string> ports;
  for (const auto &p : net.inputs)
    ports.insert(p.name);

  TensorMap<T> grads;
  for (const auto &[name, g] : output_grads) {
    const auto &value = act.at(name);
    require(g.shape() == value.shape(), ErrorKind::shape,
            "gradient for '" + name + "' has shape " + shape_string(g.shape()) +
                ", expected " + shape_string(value.shape()));
    grads[name] = g;
  }

  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto &layer = net.layers[li];
    auto git = grads.find(layer.output);
    if (git == grads.end())
      continue;
    std::vector<const BasicTensor<T> *> in;
    std::vector<bool> want;
    for (const auto &name : layer.inputs) {
      in.push_back(&act.at(name));
      want.push_back(!ports.count(name) || options.input_grads);
    }
    std::vector<BasicTensor<T>> dxs;
    detail::layer_backward(layer, params, in, act.at(layer.output), act.caches[li], git->second,
                           options.param_grads ? &out.params : nullptr, want, dxs);
    grads.erase(git);
    for (std::size_t i = 0; i < dxs.size(); ++i) {
      if (dxs[i].empty())
        continue;
      auto [it, inserted] = grads.try_emplace(layer.inputs[i], std::move(dxs[i]));
      if (!inserted)
        it->second += dxs[i];
    }
  }
  if (options.input_grads) {
    for (const auto &port : net.inputs) {
      auto it = grads.find(port.name);
      out.inputs[port.name] =
          it != grads.end() ? std::move(it->second) : BasicTensor<T>(port.shape);
    }
  }
  return out;
}

} // namespace talkhead
