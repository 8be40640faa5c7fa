#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "semisfl/layers.hpp"

namespace semisfl {

/// Named layer stack plus the default cut point. `split_index` counts entries of
/// `layers`: the bottom model owns layers [0, split_index).
struct ArchitectureDescriptor {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::size_t classes = 0;
  std::size_t split_index = 1;

  /// Per-sample activation shapes: shapes()[i] feeds layer i, back() is the output.
  std::vector<Shape> shapes() const {
    std::vector<Shape> s{input_shape};
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        s.push_back(output_shape(layers[i], s.back()));
      } catch (const ContractError& e) {
        throw ContractError(name + ": layer " + std::to_string(i) + " (" + layer_name(layers[i]) + "): " + e.what());
      }
    }
    return s;
  }

  void validate_split(std::size_t index) const {
    if (index < 1 || index >= layers.size())
      throw ContractError(name + ": split index " + std::to_string(index) + " outside [1, " +
                          std::to_string(layers.size()) + ")");
  }

  void validate() const {
    if (layers.size() < 2) throw ContractError(name + ": need at least two layers to split");
    if (classes == 0) throw ContractError(name + ": class count must be positive");
    const auto s = shapes();
    if (s.back() != Shape{classes})
      throw ContractError(name + ": output shape " + shape_str(s.back()) + " does not equal (" +
                          std::to_string(classes) + ")");
    validate_split(split_index);
  }
};

/// Position just after the k-th weighted layer (1-based) and any activation or
/// pooling layers that follow it, i.e. the cut a "split at layer k" refers to.
inline std::size_t split_after_weighted_layer(const ArchitectureDescriptor& d, std::size_t k) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < d.layers.size(); ++i) {
    if (parameter_count(d.layers[i]) == 0) continue;
    if (++seen == k) {
      std::size_t j = i + 1;
      while (j < d.layers.size() &&
             (std::holds_alternative<ReLU>(d.layers[j]) || std::holds_alternative<MaxPool2d>(d.layers[j])))
        ++j;
      return j;
    }
  }
  throw ContractError(d.name + ": fewer than " + std::to_string(k) + " weighted layers");
}

inline nlohmann::json layer_to_json(const LayerSpec& spec) {
  nlohmann::json j{{"type", layer_name(spec)}};
  if (auto* l = std::get_if<Linear>(&spec)) {
    j["in"] = l->in;
    j["out"] = l->out;
    j["bias"] = l->bias;
  } else if (auto* c = std::get_if<Conv2d>(&spec)) {
    j["in_channels"] = c->in_channels;
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
    j["padding"] = c->padding;
  } else if (auto* m = std::get_if<MaxPool2d>(&spec)) {
    j["kernel"] = m->kernel;
    j["stride"] = m->stride;
  }
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  LayerSpec spec;
  if (type == "linear") {
    spec = Linear{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(), j.value("bias", true)};
  } else if (type == "conv2d") {
    spec = Conv2d{j.at("in_channels").get<std::size_t>(), j.at("out_channels").get<std::size_t>(),
                  j.at("kernel").get<std::size_t>(), j.value("stride", std::size_t{1}), j.value("padding", std::size_t{0})};
  } else if (type == "relu") {
    spec = ReLU{};
  } else if (type == "maxpool2d") {
    const auto k = j.at("kernel").get<std::size_t>();
    spec = MaxPool2d{k, j.value("stride", k)};
  } else if (type == "flatten") {
    spec = Flatten{};
  } else {
    throw ContractError("unknown layer type '" + type + "'");
  }
  validate_layer(spec);
  return spec;
}

inline ArchitectureDescriptor descriptor_from_json(const nlohmann::json& j) {
  ArchitectureDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.input_shape = j.at("input_shape").get<Shape>();
  for (const auto& l : j.at("layers")) d.layers.push_back(layer_from_json(l));
  d.classes = j.at("classes").get<std::size_t>();
  d.split_index = j.at("split_index").get<std::size_t>();
  d.validate();
  return d;
}

inline nlohmann::json descriptor_to_json(const ArchitectureDescriptor& d) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : d.layers) layers.push_back(layer_to_json(l));
  return {{"name", d.name}, {"input_shape", d.input_shape}, {"layers", layers}, {"split_index", d.split_index},
          {"classes", d.classes}};
}

namespace architectures {

/// Small MLP used for desk-scale runs on vector data.
inline ArchitectureDescriptor mlp(std::size_t dim, std::size_t hidden, std::size_t classes) {
  return {"mlp", {dim}, {Linear{dim, hidden}, ReLU{}, Linear{hidden, hidden}, ReLU{}, Linear{hidden, classes}},
          classes, 2};
}

/// SVHN-style CNN: two 5x5 convolutions, a 512-unit hidden layer, 10-way output.
inline ArchitectureDescriptor svhn_cnn() {
  ArchitectureDescriptor d{"cnn", {3, 32, 32},
                           {Conv2d{3, 32, 5, 1, 0}, ReLU{}, MaxPool2d{2, 2}, Conv2d{32, 64, 5, 1, 0}, ReLU{},
                            MaxPool2d{2, 2}, Flatten{}, Linear{1600, 512}, ReLU{}, Linear{512, 10}},
                           10, 0};
  d.split_index = split_after_weighted_layer(d, 2);
  return d;
}

/// CIFAR-10 AlexNet variant: 11x11, 7x7 and three 3x3 convolutions, two hidden
/// fully-connected layers and a 10-way output.
inline ArchitectureDescriptor cifar_alexnet() {
  ArchitectureDescriptor d{"alexnet", {3, 32, 32},
                           {Conv2d{3, 64, 11, 1, 5}, ReLU{}, MaxPool2d{2, 2},
                            Conv2d{64, 128, 7, 1, 3}, ReLU{}, MaxPool2d{2, 2},
                            Conv2d{128, 384, 3, 1, 1}, ReLU{},
                            Conv2d{384, 192, 3, 1, 1}, ReLU{},
                            Conv2d{192, 512, 3, 1, 1}, ReLU{}, MaxPool2d{2, 2},
                            Flatten{}, Linear{8192, 1024}, ReLU{}, Linear{1024, 1024}, ReLU{}, Linear{1024, 10}},
                           10, 0};
  d.split_index = split_after_weighted_layer(d, 5);
  return d;
}

/// VGG16 on 144x144 inputs with 100 classes.
inline ArchitectureDescriptor image100_vgg16() {
  std::vector<LayerSpec> layers;
  std::size_t c = 3;
  const std::size_t plan[5][2] = {{64, 2}, {128, 2}, {256, 3}, {512, 3}, {512, 3}};
  for (const auto& stage : plan) {
    for (std::size_t r = 0; r < stage[1]; ++r) {
      layers.push_back(Conv2d{c, stage[0], 3, 1, 1});
      layers.push_back(ReLU{});
      c = stage[0];
    }
    layers.push_back(MaxPool2d{2, 2});
  }
  layers.push_back(Flatten{});
  layers.push_back(Linear{512 * 4 * 4, 4096});
  layers.push_back(ReLU{});
  layers.push_back(Linear{4096, 4096});
  layers.push_back(ReLU{});
  layers.push_back(Linear{4096, 100});
  ArchitectureDescriptor d{"vgg16", {3, 144, 144}, std::move(layers), 100, 0};
  d.split_index = split_after_weighted_layer(d, 13);
  return d;
}

inline ArchitectureDescriptor by_name(const std::string& name) {
  if (name == "cnn") return svhn_cnn();
  if (name == "alexnet") return cifar_alexnet();
  if (name == "vgg16") return image100_vgg16();
  throw ContractError("unknown built-in architecture '" + name + "'");
}

}  // namespace architectures

}  // namespace semisfl
