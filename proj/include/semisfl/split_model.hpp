#pragma once

#include <random>
#include <utility>
#include <vector>

#include "semisfl/architecture.hpp"
#include "semisfl/layers.hpp"

namespace semisfl {

/// Client-side bottom, server-side top and the projection head that reads the bottom's output.
struct SplitModel {
  Network bottom;
  Network top;
  Network head;
  std::size_t split_index = 0;

  std::size_t feature_size() const { return shape_numel(bottom.output_shape()); }
};

struct TeacherModel {
  SplitModel model;
  double decay = 0.99;
};

namespace detail {

inline Network slice(const Network& full, std::size_t begin, std::size_t end) {
  Network part(full.shapes[begin], std::vector<LayerSpec>(full.layers.begin() + begin, full.layers.begin() + end));
  const std::size_t p0 = full.param_offset[begin];
  for (std::size_t k = 0; k < part.params.size(); ++k) part.params[k] = full.params[p0 + k];
  return part;
}

}  // namespace detail

/// Cuts a network into (bottom, top) with bottom = layers [0, index).
inline std::pair<Network, Network> split_network(const Network& full, std::size_t index) {
  if (index < 1 || index >= full.layers.size())
    throw ContractError("split index " + std::to_string(index) + " outside [1, " +
                        std::to_string(full.layers.size()) + ")");
  return {detail::slice(full, 0, index), detail::slice(full, index, full.layers.size())};
}

/// Concatenates bottom and top back into one network.
inline Network assemble_network(const Network& bottom, const Network& top) {
  if (bottom.output_shape() != top.input_shape)
    throw ContractError("assemble: bottom output " + shape_str(bottom.output_shape()) + " does not feed top input " +
                        shape_str(top.input_shape));
  std::vector<LayerSpec> layers = bottom.layers;
  layers.insert(layers.end(), top.layers.begin(), top.layers.end());
  Network full(bottom.input_shape, std::move(layers));
  std::size_t k = 0;
  for (const auto& p : bottom.params) full.params[k++] = p;
  for (const auto& p : top.params) full.params[k++] = p;
  return full;
}

/// Flatten -> Linear(F, F) -> ReLU -> Linear(F, proj_dim).
inline Network make_projection_head(const Shape& feature_shape, std::size_t proj_dim) {
  const std::size_t f = shape_numel(feature_shape);
  return Network(feature_shape, {Flatten{}, Linear{f, f}, ReLU{}, Linear{f, proj_dim}});
}

/// Validates that the three components fit together and bundles them.
inline SplitModel assemble(Network bottom, Network top, Network head) {
  if (bottom.output_shape() != top.input_shape)
    throw ContractError("assemble: bottom output " + shape_str(bottom.output_shape()) + " does not feed top input " +
                        shape_str(top.input_shape));
  if (bottom.output_shape() != head.input_shape)
    throw ContractError("assemble: projection head expects " + shape_str(head.input_shape) + ", bottom emits " +
                        shape_str(bottom.output_shape()));
  SplitModel m;
  m.split_index = bottom.layers.size();
  m.bottom = std::move(bottom);
  m.top = std::move(top);
  m.head = std::move(head);
  return m;
}

/// Instantiates the descriptor, initialises weights from `seed` and cuts it at `index`.
inline SplitModel split(const ArchitectureDescriptor& desc, std::size_t index, std::size_t proj_dim, std::uint64_t seed) {
  desc.validate_split(index);
  Network full(desc.input_shape, desc.layers);
  std::mt19937_64 rng(seed);
  full.init(rng);
  auto [bottom, top] = split_network(full, index);
  Network head = make_projection_head(bottom.output_shape(), proj_dim);
  head.init(rng);
  return assemble(std::move(bottom), std::move(top), std::move(head));
}

inline void ema_into(std::vector<Tensor>& teacher, const std::vector<Tensor>& student, double gamma) {
  if (teacher.size() != student.size()) throw ContractError("ema_update: parameter lists differ in length");
  for (std::size_t t = 0; t < teacher.size(); ++t) {
    auto& w = teacher[t].values;
    const auto& s = student[t].values;
    if (w.size() != s.size()) throw ContractError("ema_update: shape mismatch at tensor " + std::to_string(t));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = gamma * w[i] + (1.0 - gamma) * s[i];
  }
}

inline void check_decay(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("EMA decay must lie in (0, 1]");
}

/// teacher <- gamma * teacher + (1 - gamma) * student, component-wise.
inline void ema_update(TeacherModel& teacher, const SplitModel& student, double gamma) {
  check_decay(gamma);
  ema_into(teacher.model.bottom.params, student.bottom.params, gamma);
  ema_into(teacher.model.top.params, student.top.params, gamma);
  ema_into(teacher.model.head.params, student.head.params, gamma);
}

inline TeacherModel make_teacher(const SplitModel& student, double decay) {
  check_decay(decay);
  return {student, decay};
}

struct LayerSize {
  std::string type;
  std::size_t params = 0;
  std::size_t bytes = 0;
  Shape output_shape;
};

struct SplitCandidate {
  std::size_t split_index = 0;
  std::size_t bottom_params = 0;
  std::size_t bottom_bytes = 0;
  std::size_t feature_scalars = 0;  // per sample
  std::size_t feature_bytes = 0;    // per sample
  std::size_t batch_feature_bytes = 0;
};

struct SizeReport {
  std::vector<LayerSize> layers;
  std::vector<SplitCandidate> candidates;  // split indices 1 .. layers-1
  std::size_t model_params = 0;
  std::size_t model_bytes = 0;
  std::size_t split_index = 0;
  std::size_t batch = 0;
  std::size_t wire_bytes = 4;

  const SplitCandidate& at(std::size_t split) const { return candidates.at(split - 1); }
  const SplitCandidate& selected() const { return at(split_index); }
};

inline SizeReport size_report(const ArchitectureDescriptor& desc, std::size_t split_index, std::size_t batch,
                              std::size_t wire_bytes) {
  desc.validate_split(split_index);
  const auto shapes = desc.shapes();
  SizeReport r;
  r.split_index = split_index;
  r.batch = batch;
  r.wire_bytes = wire_bytes;
  for (std::size_t i = 0; i < desc.layers.size(); ++i) {
    const std::size_t n = parameter_count(desc.layers[i]);
    r.layers.push_back({layer_name(desc.layers[i]), n, n * wire_bytes, shapes[i + 1]});
    r.model_params += n;
  }
  r.model_bytes = r.model_params * wire_bytes;
  std::size_t cumulative = 0;
  for (std::size_t s = 1; s < desc.layers.size(); ++s) {
    cumulative += r.layers[s - 1].params;
    const std::size_t f = shape_numel(shapes[s]);
    r.candidates.push_back({s, cumulative, cumulative * wire_bytes, f, f * wire_bytes, f * wire_bytes * batch});
  }
  return r;
}

}  // namespace semisfl
