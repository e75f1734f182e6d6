#include "talkhead/network.hpp"

namespace talkhead {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
  case LayerKind::conv2d: return "conv2d";
  case LayerKind::tconv2d: return "tconv2d";
  case LayerKind::conv1d: return "conv1d";
  case LayerKind::linear: return "linear";
  case LayerKind::instance_norm: return "instance_norm";
  case LayerKind::leaky_relu: return "leaky_relu";
  case LayerKind::tanh: return "tanh";
  case LayerKind::residual_block: return "residual_block";
  case LayerKind::reshape: return "reshape";
  case LayerKind::concat: return "concat";
  case LayerKind::resize_bilinear: return "resize_bilinear";
  case LayerKind::paste: return "paste";
  }
  return "unknown";
}

namespace layers {

namespace {
LayerSpec base(LayerKind kind, std::string name, std::vector<std::string> in, std::string out) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  l.inputs = std::move(in);
  l.output = std::move(out);
  return l;
}
} // namespace

LayerSpec conv2d(std::string name, std::string in, std::string out, std::int64_t c_in,
                 std::int64_t c_out, std::int64_t kernel, std::int64_t stride,
                 std::int64_t pad, bool bias) {
  auto l = base(LayerKind::conv2d, std::move(name), {std::move(in)}, std::move(out));
  l.c_in = c_in;
  l.c_out = c_out;
  l.kernel = kernel;
  l.stride = stride;
  l.pad_in = pad;
  l.bias = bias;
  return l;
}

LayerSpec tconv2d(std::string name, std::string in, std::string out, std::int64_t c_in,
                  std::int64_t c_out, std::int64_t kernel, std::int64_t stride,
                  std::int64_t pad, std::int64_t pad_out, bool bias) {
  auto l = conv2d(std::move(name), std::move(in), std::move(out), c_in, c_out, kernel, stride,
                  pad, bias);
  l.kind = LayerKind::tconv2d;
  l.pad_out = pad_out;
  return l;
}

LayerSpec conv1d(std::string name, std::string in, std::string out, std::int64_t c_in,
                 std::int64_t c_out, std::int64_t kernel, std::int64_t pad, bool bias) {
  auto l = conv2d(std::move(name), std::move(in), std::move(out), c_in, c_out, kernel, 1, pad,
                  bias);
  l.kind = LayerKind::conv1d;
  return l;
}

LayerSpec linear(std::string name, std::string in, std::string out, std::int64_t n_in,
                 std::int64_t n_out, bool bias) {
  auto l = base(LayerKind::linear, std::move(name), {std::move(in)}, std::move(out));
  l.c_in = n_in;
  l.c_out = n_out;
  l.bias = bias;
  return l;
}

LayerSpec instance_norm(std::string name, std::string in, std::string out,
                        std::int64_t channels) {
  auto l = base(LayerKind::instance_norm, std::move(name), {std::move(in)}, std::move(out));
  l.c_in = l.c_out = channels;
  return l;
}

LayerSpec leaky_relu(std::string name, std::string in, std::string out, double slope) {
  auto l = base(LayerKind::leaky_relu, std::move(name), {std::move(in)}, std::move(out));
  l.slope = slope;
  return l;
}

LayerSpec tanh(std::string name, std::string in, std::string out) {
  return base(LayerKind::tanh, std::move(name), {std::move(in)}, std::move(out));
}

LayerSpec residual_block(std::string name, std::string in, std::string out,
                         std::int64_t channels) {
  auto l = base(LayerKind::residual_block, std::move(name), {std::move(in)}, std::move(out));
  l.c_in = l.c_out = channels;
  l.kernel = 3;
  l.stride = 1;
  l.pad_in = 1;
  return l;
}

LayerSpec reshape(std::string name, std::string in, std::string out, Shape target) {
  auto l = base(LayerKind::reshape, std::move(name), {std::move(in)}, std::move(out));
  l.target = std::move(target);
  return l;
}

LayerSpec concat(std::string name, std::vector<std::string> ins, std::string out) {
  return base(LayerKind::concat, std::move(name), std::move(ins), std::move(out));
}

LayerSpec resize_bilinear(std::string name, std::string in, std::string out,
                          std::int64_t height, std::int64_t width) {
  auto l = base(LayerKind::resize_bilinear, std::move(name), {std::move(in)}, std::move(out));
  l.target = {height, width};
  return l;
}

LayerSpec paste(std::string name, std::string dst, std::string src, std::string out,
                std::int64_t top, std::int64_t left) {
  auto l = base(LayerKind::paste, std::move(name), {std::move(dst), std::move(src)},
                std::move(out));
  l.top = top;
  l.left = left;
  return l;
}

} // namespace layers

namespace {

[[noreturn]] void layer_error(const LayerSpec &l, const std::string &what) {
  fail(ErrorKind::shape,
       "layer '" + l.name + "' (" + std::string(to_string(l.kind)) + "): " + what);
}

void expect_rank(const LayerSpec &l, const Shape &s, std::size_t rank) {
  if (s.size() != rank)
    layer_error(l, "expected rank " + std::to_string(rank) + " input, got " + shape_string(s));
}

void expect_channels(const LayerSpec &l, const Shape &s) {
  if (s[0] != l.c_in)
    layer_error(l, "expected " + std::to_string(l.c_in) + " input channels, got " +
                       shape_string(s));
}

std::int64_t positive(const LayerSpec &l, std::int64_t extent) {
  if (extent < 1)
    layer_error(l, "output extent " + std::to_string(extent) + " is not positive");
  return extent;
}

} // namespace

Shape infer_layer_shape(const LayerSpec &l, const std::vector<Shape> &in) {
  if (in.empty())
    layer_error(l, "no inputs");
  const Shape &x = in.front();
  switch (l.kind) {
  case LayerKind::conv2d:
    expect_rank(l, x, 3);
    expect_channels(l, x);
    return {l.c_out,
            positive(l, kernels::conv_out_extent(x[1], l.kernel, l.stride, l.pad_in)),
            positive(l, kernels::conv_out_extent(x[2], l.kernel, l.stride, l.pad_in))};
  case LayerKind::tconv2d:
    expect_rank(l, x, 3);
    expect_channels(l, x);
    if (l.pad_out >= l.stride)
      layer_error(l, "output padding must be smaller than the stride");
    return {l.c_out,
            positive(l, kernels::tconv_out_extent(x[1], l.kernel, l.stride, l.pad_in, l.pad_out)),
            positive(l, kernels::tconv_out_extent(x[2], l.kernel, l.stride, l.pad_in, l.pad_out))};
  case LayerKind::conv1d:
    expect_rank(l, x, 2);
    expect_channels(l, x);
    return {l.c_out, positive(l, kernels::conv_out_extent(x[1], l.kernel, l.stride, l.pad_in))};
  case LayerKind::linear:
    if (shape_size(x) != l.c_in)
      layer_error(l, "expected " + std::to_string(l.c_in) + " inputs, got " + shape_string(x));
    return {l.c_out};
  case LayerKind::instance_norm:
    expect_rank(l, x, 3);
    expect_channels(l, x);
    return x;
  case LayerKind::leaky_relu:
  case LayerKind::tanh:
    return x;
  case LayerKind::residual_block:
    expect_rank(l, x, 3);
    expect_channels(l, x);
    if (l.c_in != l.c_out)
      layer_error(l, "residual block must preserve channels");
    return x;
  case LayerKind::reshape:
    if (shape_size(l.target) != shape_size(x))
      layer_error(l, "cannot reshape " + shape_string(x) + " to " + shape_string(l.target));
    return l.target;
  case LayerKind::concat: {
    if (in.size() < 2)
      layer_error(l, "concat needs at least two inputs");
    Shape out = x;
    expect_rank(l, x, 3);
    for (std::size_t i = 1; i < in.size(); ++i) {
      expect_rank(l, in[i], 3);
      if (in[i][1] != x[1] || in[i][2] != x[2])
        layer_error(l, "spatial mismatch " + shape_string(in[i]) + " vs " + shape_string(x));
      out[0] += in[i][0];
    }
    return out;
  }
  case LayerKind::resize_bilinear:
    expect_rank(l, x, 3);
    if (l.target.size() != 2 || l.target[0] < 1 || l.target[1] < 1)
      layer_error(l, "resize target must be two positive extents");
    return {x[0], l.target[0], l.target[1]};
  case LayerKind::paste:
    if (in.size() != 2)
      layer_error(l, "paste needs destination and source");
    expect_rank(l, x, 3);
    expect_rank(l, in[1], 3);
    if (in[1][0] != x[0])
      layer_error(l, "channel mismatch " + shape_string(in[1]) + " into " + shape_string(x));
    if (l.top < 0 || l.left < 0 || l.top + in[1][1] > x[1] || l.left + in[1][2] > x[2])
      layer_error(l, "rect at (" + std::to_string(l.top) + "," + std::to_string(l.left) +
                         ") of " + shape_string(in[1]) + " does not fit " + shape_string(x));
    return x;
  }
  layer_error(l, "unknown kind");
}

std::vector<ParameterSlot> layer_parameter_slots(const LayerSpec &l) {
  using Init = ParameterSlot::Init;
  std::vector<ParameterSlot> slots;
  switch (l.kind) {
  case LayerKind::conv2d:
    slots.push_back({l.name + ".weight", {l.c_out, l.c_in, l.kernel, l.kernel}, Init::normal});
    break;
  case LayerKind::tconv2d:
    slots.push_back({l.name + ".weight", {l.c_in, l.c_out, l.kernel, l.kernel}, Init::normal});
    break;
  case LayerKind::conv1d:
    slots.push_back({l.name + ".weight", {l.c_out, l.c_in, 1, l.kernel}, Init::normal});
    break;
  case LayerKind::linear:
    slots.push_back({l.name + ".weight", {l.c_out, l.c_in}, Init::normal});
    break;
  case LayerKind::instance_norm:
    slots.push_back({l.name + ".gamma", {l.c_out}, Init::ones});
    slots.push_back({l.name + ".beta", {l.c_out}, Init::zeros});
    return slots;
  case LayerKind::residual_block: {
    const std::int64_t c = l.c_out;
    slots.push_back({l.name + ".conv_a.weight", {c, c, 3, 3}, Init::normal});
    slots.push_back({l.name + ".norm_a.gamma", {c}, Init::ones});
    slots.push_back({l.name + ".norm_a.beta", {c}, Init::zeros});
    slots.push_back({l.name + ".conv_b.weight", {c, c, 3, 3}, Init::normal});
    slots.push_back({l.name + ".norm_b.gamma", {c}, Init::ones});
    slots.push_back({l.name + ".norm_b.beta", {c}, Init::zeros});
    return slots;
  }
  default:
    return slots;
  }
  if (l.bias)
    slots.push_back({l.name + ".bias", {l.c_out}, Init::zeros});
  return slots;
}

std::map<std::string, Shape> NetworkSpec::infer_shapes() const {
  std::map<std::string, Shape> shapes;
  for (const auto &port : inputs)
    shapes[port.name] = port.shape;
  for (const auto &layer : layers) {
    std::vector<Shape> in;
    for (const auto &name : layer.inputs) {
      auto it = shapes.find(name);
      if (it == shapes.end())
        fail(ErrorKind::shape, "layer '" + layer.name + "': input value '" + name +
                                   "' is not produced by any earlier layer or port");
      in.push_back(it->second);
    }
    if (shapes.count(layer.output))
      fail(ErrorKind::shape, "layer '" + layer.name + "': value '" + layer.output +
                                 "' is produced twice");
    shapes[layer.output] = infer_layer_shape(layer, in);
  }
  for (const auto &out : outputs)
    if (!shapes.count(out))
      fail(ErrorKind::shape, name + ": output '" + out + "' is never produced");
  return shapes;
}

std::vector<ParameterSlot> NetworkSpec::parameter_slots() const {
  std::vector<ParameterSlot> slots;
  for (const auto &layer : layers) {
    auto s = layer_parameter_slots(layer);
    slots.insert(slots.end(), s.begin(), s.end());
  }
  return slots;
}

std::int64_t NetworkSpec::parameter_count() const {
  std::int64_t n = 0;
  for (const auto &slot : parameter_slots())
    n += shape_size(slot.shape);
  return n;
}

const PortSpec &NetworkSpec::input(const std::string &port) const {
  for (const auto &p : inputs)
    if (p.name == port)
      return p;
  fail(ErrorKind::usage, name + ": no input port '" + port + "'");
}

} // namespace talkhead
