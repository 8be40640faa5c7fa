#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "semisfl/tensor.hpp"

namespace semisfl {

struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  bool bias = true;
  friend bool operator==(const Linear&, const Linear&) = default;
};

struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};

struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct MaxPool2d {
  std::size_t kernel = 0;
  std::size_t stride = 0;
  friend bool operator==(const MaxPool2d&, const MaxPool2d&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

using LayerSpec = std::variant<Linear, Conv2d, ReLU, MaxPool2d, Flatten>;

inline std::string layer_name(const LayerSpec& spec) {
  return std::visit(
      [](const auto& l) -> std::string {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Linear>) return "linear";
        else if constexpr (std::is_same_v<L, Conv2d>) return "conv2d";
        else if constexpr (std::is_same_v<L, ReLU>) return "relu";
        else if constexpr (std::is_same_v<L, MaxPool2d>) return "maxpool2d";
        else return "flatten";
      },
      spec);
}

/// Rejects non-positive dimensions.
inline void validate_layer(const LayerSpec& spec) {
  std::visit(
      [](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Linear>) {
          if (l.in == 0 || l.out == 0) throw ContractError("linear dimensions must be positive");
        } else if constexpr (std::is_same_v<L, Conv2d>) {
          if (l.in_channels == 0 || l.out_channels == 0 || l.kernel == 0 || l.stride == 0)
            throw ContractError("conv2d dimensions must be positive");
        } else if constexpr (std::is_same_v<L, MaxPool2d>) {
          if (l.kernel == 0 || l.stride == 0) throw ContractError("maxpool2d dimensions must be positive");
        }
      },
      spec);
}

/// Per-sample output shape of a layer, or ContractError when the input shape is incompatible.
inline Shape output_shape(const LayerSpec& spec, const Shape& in) {
  validate_layer(spec);
  return std::visit(
      [&](const auto& l) -> Shape {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Linear>) {
          if (in.size() != 1 || in[0] != l.in)
            throw ContractError("linear expects (" + std::to_string(l.in) + "), got " + shape_str(in));
          return {l.out};
        } else if constexpr (std::is_same_v<L, Conv2d>) {
          if (in.size() != 3 || in[0] != l.in_channels)
            throw ContractError("conv2d expects (" + std::to_string(l.in_channels) + ", H, W), got " +
                                shape_str(in));
          const std::size_t h = in[1] + 2 * l.padding, w = in[2] + 2 * l.padding;
          if (h < l.kernel || w < l.kernel) throw ContractError("conv2d kernel larger than padded input");
          return {l.out_channels, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
        } else if constexpr (std::is_same_v<L, MaxPool2d>) {
          if (in.size() != 3) throw ContractError("maxpool2d expects (C, H, W), got " + shape_str(in));
          if (in[1] < l.kernel || in[2] < l.kernel) throw ContractError("maxpool2d kernel larger than input");
          return {in[0], (in[1] - l.kernel) / l.stride + 1, (in[2] - l.kernel) / l.stride + 1};
        } else if constexpr (std::is_same_v<L, Flatten>) {
          return {shape_numel(in)};
        } else {
          return in;
        }
      },
      spec);
}

/// Shapes of the trainable tensors a layer owns, weight first.
inline std::vector<Shape> parameter_shapes(const LayerSpec& spec) {
  if (auto* l = std::get_if<Linear>(&spec)) {
    std::vector<Shape> s{{l->out, l->in}};
    if (l->bias) s.push_back({l->out});
    return s;
  }
  if (auto* c = std::get_if<Conv2d>(&spec))
    return {{c->out_channels, c->in_channels, c->kernel, c->kernel}, {c->out_channels}};
  return {};
}

inline std::size_t parameter_count(const LayerSpec& spec) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(spec)) n += shape_numel(s);
  return n;
}

/// A feed-forward stack of layers with its parameters stored flat in layer order.
struct Network {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::vector<Tensor> params;
  std::vector<std::size_t> param_offset;  // first params index of each layer
  std::vector<Shape> shapes;              // shapes[i] = per-sample input of layer i; back() = output

  Network() = default;

  Network(Shape input, std::vector<LayerSpec> specs) : input_shape(std::move(input)), layers(std::move(specs)) {
    shapes.push_back(input_shape);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        shapes.push_back(semisfl::output_shape(layers[i], shapes.back()));
      } catch (const ContractError& e) {
        throw ContractError("layer " + std::to_string(i) + " (" + layer_name(layers[i]) + "): " + e.what());
      }
      param_offset.push_back(params.size());
      for (auto& s : parameter_shapes(layers[i])) params.emplace_back(s);
    }
    param_offset.push_back(params.size());
  }

  const Shape& output_shape() const { return shapes.back(); }

  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  template <class Rng>
  void init(Rng& rng) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto pshapes = parameter_shapes(layers[i]);
      if (pshapes.empty()) continue;
      const Shape& w = pshapes[0];
      const std::size_t fan_in = shape_numel(w) / w[0];
      std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fan_in)), 1.0 / std::sqrt(double(fan_in)));
      for (std::size_t p = param_offset[i]; p < param_offset[i + 1]; ++p)
        for (double& v : params[p].values) v = dist(rng);
    }
  }
};

/// Activations retained by forward: entries[0] is the input, entries[i+1] the output of layer i.
struct Trace {
  std::vector<Tensor> activations;
  const Tensor& output() const { return activations.back(); }
};

namespace detail {

inline void linear_forward(const Linear& l, const Tensor& w, const Tensor* b, const Tensor& x, Tensor& y) {
  const std::size_t batch = x.batch();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = x.row(n);
    double* yr = y.row(n);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double* wr = w.values.data() + o * l.in;
      double acc = b ? b->values[o] : 0.0;
      for (std::size_t i = 0; i < l.in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

inline void linear_backward(const Linear& l, const Tensor& w, const Tensor& x, const Tensor& dy, Tensor& dx,
                            Tensor& dw, Tensor* db) {
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* xr = x.row(n);
    const double* gr = dy.row(n);
    double* dxr = dx.row(n);
    for (std::size_t o = 0; o < l.out; ++o) {
      const double g = gr[o];
      if (g == 0.0) continue;
      const double* wr = w.values.data() + o * l.in;
      double* dwr = dw.values.data() + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) {
        dwr[i] += g * xr[i];
        dxr[i] += g * wr[i];
      }
      if (db) db->values[o] += g;
    }
  }
}

struct ConvGeometry {
  std::size_t cin, h, w, cout, oh, ow, k, s, p;
};

inline ConvGeometry conv_geometry(const Conv2d& c, const Shape& in, const Shape& out) {
  return {in[0], in[1], in[2], out[0], out[1], out[2], c.kernel, c.stride, c.padding};
}

inline void conv_forward(const ConvGeometry& g, const Tensor& w, const Tensor& b, const Tensor& x, Tensor& y) {
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* xr = x.row(n);
    double* yr = y.row(n);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = b.values[co];
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const long iy = long(oy * g.s + ky) - long(g.p);
              if (iy < 0 || iy >= long(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const long ix = long(ox * g.s + kx) - long(g.p);
                if (ix < 0 || ix >= long(g.w)) continue;
                acc += w.values[((co * g.cin + ci) * g.k + ky) * g.k + kx] * xr[(ci * g.h + iy) * g.w + ix];
              }
            }
          yr[(co * g.oh + oy) * g.ow + ox] = acc;
        }
  }
}

inline void conv_backward(const ConvGeometry& g, const Tensor& w, const Tensor& x, const Tensor& dy, Tensor& dx,
                          Tensor& dw, Tensor& db) {
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* xr = x.row(n);
    const double* gr = dy.row(n);
    double* dxr = dx.row(n);
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double gv = gr[(co * g.oh + oy) * g.ow + ox];
          if (gv == 0.0) continue;
          db.values[co] += gv;
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const long iy = long(oy * g.s + ky) - long(g.p);
              if (iy < 0 || iy >= long(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const long ix = long(ox * g.s + kx) - long(g.p);
                if (ix < 0 || ix >= long(g.w)) continue;
                const std::size_t wi = ((co * g.cin + ci) * g.k + ky) * g.k + kx;
                const std::size_t xi = (ci * g.h + iy) * g.w + ix;
                dw.values[wi] += gv * xr[xi];
                dxr[xi] += gv * w.values[wi];
              }
            }
        }
  }
}

/// Index of the first maximum inside each pooling window, per output element.
inline std::vector<std::size_t> maxpool_argmax(const MaxPool2d& m, const Shape& in, const Shape& out,
                                               const Tensor& x) {
  const std::size_t c = in[0], h = in[1], w = in[2], oh = out[1], ow = out[2];
  std::vector<std::size_t> idx(x.batch() * c * oh * ow);
  std::size_t k = 0;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    const double* xr = x.row(n);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (ch * h + oy * m.stride) * w + ox * m.stride;
          for (std::size_t ky = 0; ky < m.kernel; ++ky)
            for (std::size_t kx = 0; kx < m.kernel; ++kx) {
              const std::size_t xi = (ch * h + oy * m.stride + ky) * w + ox * m.stride + kx;
              if (xr[xi] > xr[best]) best = xi;
            }
          idx[k++] = best;
        }
  }
  return idx;
}

}  // namespace detail

inline Tensor layer_forward(const Network& net, std::size_t i, const Tensor& x) {
  Shape out_shape{x.batch()};
  out_shape.insert(out_shape.end(), net.shapes[i + 1].begin(), net.shapes[i + 1].end());
  Tensor y(out_shape);
  const std::size_t p0 = net.param_offset[i];
  std::visit(
      [&](const auto& l) {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Linear>) {
          detail::linear_forward(l, net.params[p0], l.bias ? &net.params[p0 + 1] : nullptr, x, y);
        } else if constexpr (std::is_same_v<L, Conv2d>) {
          detail::conv_forward(detail::conv_geometry(l, net.shapes[i], net.shapes[i + 1]), net.params[p0],
                               net.params[p0 + 1], x, y);
        } else if constexpr (std::is_same_v<L, ReLU>) {
          for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
        } else if constexpr (std::is_same_v<L, MaxPool2d>) {
          const auto idx = detail::maxpool_argmax(l, net.shapes[i], net.shapes[i + 1], x);
          const std::size_t per = y.row_size();
          for (std::size_t k = 0; k < idx.size(); ++k) y[k] = x.row(k / per)[idx[k]];
        } else {
          y.values = x.values;
        }
      },
      net.layers[i]);
  return y;
}

/// Runs the network on a batch, keeping every intermediate activation.
inline Trace forward(const Network& net, const Tensor& input) {
  if (input.sample_shape() != net.input_shape)
    throw ContractError("layer 0 (" + (net.layers.empty() ? std::string("input") : layer_name(net.layers[0])) +
                        "): expected per-sample input " + shape_str(net.input_shape) + ", got " +
                        shape_str(input.sample_shape()));
  Trace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(input);
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    trace.activations.push_back(layer_forward(net, i, trace.activations.back()));
  return trace;
}

inline Tensor predict(const Network& net, const Tensor& input) { return forward(net, input).output(); }

struct Gradients {
  Tensor input;
  std::vector<Tensor> params;  // same layout as Network::params
};

/// Reverse pass through every layer. `dout` has the shape of the trace output.
inline Gradients backward(const Network& net, const Trace& trace, const Tensor& dout) {
  if (trace.activations.size() != net.layers.size() + 1)
    throw ContractError("trace has " + std::to_string(trace.activations.size()) + " activations, network needs " +
                        std::to_string(net.layers.size() + 1));
  const std::size_t batch = trace.activations.front().batch();
  for (std::size_t i = 0; i < trace.activations.size(); ++i)
    if (trace.activations[i].sample_shape() != net.shapes[i] || trace.activations[i].batch() != batch)
      throw ContractError("trace activation " + std::to_string(i) + " does not match network shapes");
  if (dout.shape != trace.output().shape)
    throw ContractError("output gradient shape " + shape_str(dout.shape) + " does not match " +
                        shape_str(trace.output().shape));

  Gradients g;
  g.params.reserve(net.params.size());
  for (const auto& p : net.params) g.params.push_back(p.zeros_like());

  Tensor dy = dout;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Tensor& x = trace.activations[i];
    Tensor dx = x.zeros_like();
    const std::size_t p0 = net.param_offset[i];
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Linear>) {
            detail::linear_backward(l, net.params[p0], x, dy, dx, g.params[p0], l.bias ? &g.params[p0 + 1] : nullptr);
          } else if constexpr (std::is_same_v<L, Conv2d>) {
            detail::conv_backward(detail::conv_geometry(l, net.shapes[i], net.shapes[i + 1]), net.params[p0], x, dy,
                                  dx, g.params[p0], g.params[p0 + 1]);
          } else if constexpr (std::is_same_v<L, ReLU>) {
            for (std::size_t k = 0; k < x.size(); ++k) dx[k] = x[k] > 0.0 ? dy[k] : 0.0;
          } else if constexpr (std::is_same_v<L, MaxPool2d>) {
            const auto idx = detail::maxpool_argmax(l, net.shapes[i], net.shapes[i + 1], x);
            const std::size_t per = dy.row_size();
            for (std::size_t k = 0; k < idx.size(); ++k) dx.row(k / per)[idx[k]] += dy[k];
          } else {
            dx.values = dy.values;
          }
        },
        net.layers[i]);
    dy = std::move(dx);
  }
  g.input = std::move(dy);
  return g;
}

}  // namespace semisfl
