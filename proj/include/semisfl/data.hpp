#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "semisfl/rng.hpp"
#include "semisfl/tensor.hpp"

namespace semisfl {

/// Samples are stored flat, one row of shape_numel(sample_shape) per sample.
struct Dataset {
  Shape sample_shape;
  std::vector<double> samples;
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return shape_numel(sample_shape); }
  const double* sample(std::size_t i) const { return samples.data() + i * sample_size(); }

  void validate() const {
    if (samples.size() != labels.size() * sample_size()) throw ContractError("dataset sample/label count mismatch");
    for (int l : labels)
      if (l < 0 || std::size_t(l) >= classes) throw ContractError("dataset label out of range");
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d{sample_shape, {}, {}, classes};
    d.samples.reserve(idx.size() * sample_size());
    d.labels.reserve(idx.size());
    for (auto i : idx) {
      d.samples.insert(d.samples.end(), sample(i), sample(i) + sample_size());
      d.labels.push_back(labels[i]);
    }
    return d;
  }

  /// Batch tensor of the selected rows.
  Tensor batch(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw ContractError("batch size must be >= 1");
    Shape s{idx.size()};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    Tensor t(s);
    for (std::size_t b = 0; b < idx.size(); ++b) std::copy(sample(idx[b]), sample(idx[b]) + sample_size(), t.row(b));
    return t;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(classes, 0);
    for (int l : labels) ++c[l];
    return c;
  }
};

struct MiniBatch {
  std::vector<std::size_t> indices;  // offsets into the owning dataset
  Tensor inputs;
  std::vector<int> labels;
  int client = -1;  // -1 for the server's labelled set
};

/// Gaussian classes with identity covariance. Class c is centred at
/// separation * sqrt(2) * u_c for orthonormal u_c, so every pair of centres is
/// 2 * separation standard deviations apart (each pairwise boundary sits
/// `separation` sigma from both centres). When dim < classes the directions are
/// fixed pseudo-random unit vectors instead.
inline Dataset generate_synthetic(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                                  std::uint64_t seed) {
  if (classes < 2 || per_class == 0 || dim == 0) throw ContractError("synthetic data needs classes >= 2 and dim >= 1");
  if (separation < 0.0) throw ContractError("separation must be non-negative");
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dim, 0.0));
  if (dim >= classes) {
    for (std::size_t c = 0; c < classes; ++c) centres[c][c] = separation * std::sqrt(2.0);
  } else {
    std::mt19937_64 dir_rng(0x5EEDu);
    std::normal_distribution<double> n01;
    for (auto& c : centres) {
      double n2 = 0.0;
      for (double& v : c) {
        v = n01(dir_rng);
        n2 += v * v;
      }
      for (double& v : c) v *= separation * std::sqrt(2.0) / std::sqrt(n2);
    }
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise;
  std::vector<std::size_t> order(classes * per_class);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset d{{dim}, std::vector<double>(order.size() * dim), std::vector<int>(order.size()), classes};
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t c = order[k] / per_class;
    d.labels[k] = int(c);
    for (std::size_t i = 0; i < dim; ++i) d.samples[k * dim + i] = centres[c][i] + noise(rng);
  }
  return d;
}

struct LabeledSplit {
  Dataset labeled;
  Dataset pool;  // labels kept for impurity metrics only
  std::vector<std::size_t> labeled_index;
  std::vector<std::size_t> pool_index;
};

/// Class-stratified labelled subset (largest-remainder quotas, at least one per class).
inline LabeledSplit split_labeled(const Dataset& data, std::size_t labeled_count, std::uint64_t seed) {
  if (labeled_count > data.size()) throw ContractError("labeled count exceeds dataset size");
  if (labeled_count < data.classes) throw ContractError("labeled count below class count; stratification impossible");
  const auto counts = data.class_counts();
  std::vector<std::size_t> quota(data.classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < data.classes; ++c) {
    const double exact = double(labeled_count) * double(counts[c]) / double(data.size());
    quota[c] = std::size_t(std::floor(exact));
    assigned += quota[c];
    remainders.push_back({exact - double(quota[c]), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < labeled_count; ++k, ++assigned) ++quota[remainders[k % remainders.size()].second];
  for (std::size_t c = 0; c < data.classes; ++c) {
    if (quota[c] > 0 || counts[c] == 0) continue;
    const auto donor = std::max_element(quota.begin(), quota.end()) - quota.begin();
    --quota[donor];
    ++quota[c];
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  LabeledSplit out;
  for (std::size_t c = 0; c < data.classes; ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    out.labeled_index.insert(out.labeled_index.end(), idx.begin(), idx.begin() + quota[c]);
    out.pool_index.insert(out.pool_index.end(), idx.begin() + quota[c], idx.end());
  }
  std::sort(out.labeled_index.begin(), out.labeled_index.end());
  std::sort(out.pool_index.begin(), out.pool_index.end());
  out.labeled = data.subset(out.labeled_index);
  out.pool = data.subset(out.pool_index);
  return out;
}

/// Per-class-over-clients Dirichlet split: for each class, shares over the N
/// clients are drawn from Dir(alpha). Result holds pool offsets per client.
/// Draws are repeated until every client holds a sample; after 100 failed
/// attempts the largest clients donate one sample each to the empty ones.
inline std::vector<std::vector<std::size_t>> dirichlet_partition(const std::vector<int>& labels, std::size_t classes,
                                                                 std::size_t clients, double alpha,
                                                                 std::uint64_t seed) {
  if (clients == 0) throw ContractError("client count must be >= 1");
  if (!(alpha > 0.0)) throw ContractError("Dirichlet concentration must be positive");
  if (labels.size() < clients) throw ContractError("pool smaller than client count");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);

  std::vector<std::vector<std::size_t>> parts;
  for (int attempt = 0; attempt < 100; ++attempt) {
    parts.assign(clients, {});
    for (auto idx : by_class) {
      if (idx.empty()) continue;
      std::shuffle(idx.begin(), idx.end(), rng);
      std::gamma_distribution<double> gamma(alpha, 1.0);
      std::vector<double> share(clients);
      double total = 0.0;
      for (double& s : share) total += (s = gamma(rng));
      if (!(total > 0.0)) {
        std::fill(share.begin(), share.end(), 0.0);
        share[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
        total = 1.0;
      }
      double cum = 0.0;
      std::size_t start = 0;
      for (std::size_t k = 0; k < clients; ++k) {
        cum += share[k] / total;
        const std::size_t end = k + 1 == clients ? idx.size() : std::min(idx.size(), std::size_t(std::llround(cum * double(idx.size()))));
        for (std::size_t p = start; p < end; ++p) parts[k].push_back(idx[p]);
        start = std::max(start, end);
      }
    }
    if (std::all_of(parts.begin(), parts.end(), [](const auto& p) { return !p.empty(); })) break;
    if (attempt == 99) {
      for (auto& p : parts) {
        if (!p.empty()) continue;
        auto& donor = *std::max_element(parts.begin(), parts.end(), [](auto& a, auto& b) { return a.size() < b.size(); });
        p.push_back(donor.back());
        donor.pop_back();
      }
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

inline double label_entropy(const std::vector<int>& labels, std::size_t classes) {
  if (labels.empty()) return 0.0;
  std::vector<double> c(classes, 0.0);
  for (int l : labels) c[l] += 1.0;
  double h = 0.0;
  for (double v : c)
    if (v > 0) {
      const double p = v / double(labels.size());
      h -= p * std::log(p);
    }
  return h;
}

inline nlohmann::json partition_manifest(const std::vector<std::vector<std::size_t>>& parts, double alpha,
                                         std::uint64_t seed) {
  nlohmann::json j{{"alpha", alpha}, {"seed", seed}, {"clients", nlohmann::json::array()}};
  for (std::size_t i = 0; i < parts.size(); ++i) j["clients"].push_back({{"id", i}, {"indices", parts[i]}});
  return j;
}

struct AugmentationConfig {
  double weak_noise = 0.1;     // vectors
  double flip_prob = 0.5;      // images
  std::size_t crop_padding = 2;
  double strong_noise = 0.5;   // vectors, must exceed weak_noise
  double dropout = 0.2;
  double scale_jitter = 0.2;
  double shift = 0.3;
  std::size_t cutout = 4;      // images
  double brightness = 0.2;
  double contrast = 0.2;
  std::size_t strong_ops = 2;

  void validate() const {
    if (weak_noise < 0.0 || !(strong_noise > weak_noise))
      throw ContractError("augmentation needs 0 <= weak_noise < strong_noise");
    if (flip_prob < 0.0 || flip_prob > 1.0 || dropout < 0.0 || dropout >= 1.0)
      throw ContractError("augmentation probabilities out of range");
  }
};

inline bool is_image(const Shape& s) { return s.size() == 3; }

inline void flip_horizontal(std::vector<double>& x, const Shape& s) {
  const std::size_t c = s[0], h = s[1], w = s[2];
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) std::reverse(x.begin() + (ch * h + y) * w, x.begin() + (ch * h + y + 1) * w);
}

namespace detail {

template <class Rng>
void random_crop(std::vector<double>& x, const Shape& s, std::size_t pad, Rng& rng) {
  if (pad == 0) return;
  const std::size_t c = s[0], h = s[1], w = s[2];
  std::uniform_int_distribution<long> off(-long(pad), long(pad));
  const long dy = off(rng), dx = off(rng);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (long y = 0; y < long(h); ++y)
      for (long xx = 0; xx < long(w); ++xx) {
        const long sy = y + dy, sx = xx + dx;
        if (sy >= 0 && sy < long(h) && sx >= 0 && sx < long(w)) out[(ch * h + y) * w + xx] = x[(ch * h + sy) * w + sx];
      }
  x.swap(out);
}

template <class Rng>
void add_noise(std::vector<double>& x, double sigma, Rng& rng) {
  if (sigma <= 0.0) return;
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : x) v += n(rng);
}

template <class Rng>
void weak_image(std::vector<double>& x, const Shape& s, const AugmentationConfig& cfg, Rng& rng) {
  std::bernoulli_distribution flip(cfg.flip_prob);
  if (flip(rng)) flip_horizontal(x, s);
  random_crop(x, s, cfg.crop_padding, rng);
}

}  // namespace detail

/// Vectors: additive Gaussian noise. Images: random horizontal flip then padded random crop.
template <class Rng>
std::vector<double> augment_weak(std::vector<double> x, const Shape& s, const AugmentationConfig& cfg, Rng& rng) {
  if (is_image(s)) detail::weak_image(x, s, cfg, rng);
  else detail::add_noise(x, cfg.weak_noise, rng);
  return x;
}

/// Vectors: noise at strong_noise, then `strong_ops` draws from {noise, dropout,
/// scale jitter, shift}. Images: weak transform, then draws from {flip, crop,
/// cutout, brightness, contrast}.
template <class Rng>
std::vector<double> augment_strong(std::vector<double> x, const Shape& s, const AugmentationConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, is_image(s) ? 4 : 3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  if (!is_image(s)) {
    detail::add_noise(x, cfg.strong_noise, rng);
    for (std::size_t k = 0; k < cfg.strong_ops; ++k) {
      switch (pick(rng)) {
        case 0: detail::add_noise(x, cfg.strong_noise, rng); break;
        case 1: {
          std::bernoulli_distribution drop(cfg.dropout);
          for (double& v : x)
            if (drop(rng)) v = 0.0;
          break;
        }
        case 2: {
          const double f = 1.0 + cfg.scale_jitter * u(rng);
          for (double& v : x) v *= f;
          break;
        }
        default: {
          const double d = cfg.shift * u(rng);
          for (double& v : x) v += d;
        }
      }
    }
    return x;
  }
  detail::weak_image(x, s, cfg, rng);
  const std::size_t c = s[0], h = s[1], w = s[2];
  for (std::size_t k = 0; k < cfg.strong_ops; ++k) {
    switch (pick(rng)) {
      case 0: flip_horizontal(x, s); break;
      case 1: detail::random_crop(x, s, cfg.crop_padding, rng); break;
      case 2: {
        const std::size_t size = std::min({cfg.cutout, h, w});
        if (size == 0) break;
        std::uniform_int_distribution<std::size_t> py(0, h - size), px(0, w - size);
        const std::size_t y0 = py(rng), x0 = px(rng);
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = y0; y < y0 + size; ++y)
            for (std::size_t xx = x0; xx < x0 + size; ++xx) x[(ch * h + y) * w + xx] = 0.0;
        break;
      }
      case 3: {
        const double d = cfg.brightness * u(rng);
        for (double& v : x) v += d;
        break;
      }
      default: {
        const double f = 1.0 + cfg.contrast * u(rng);
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
        for (double& v : x) v = mean + f * (v - mean);
      }
    }
  }
  return x;
}

namespace detail {

inline std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ContractError("idx: truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

}  // namespace detail

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<unsigned char> data;
};

/// Unsigned-byte IDX file: two zero bytes, type code 0x08, rank, big-endian dims, payload.
inline IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("idx: cannot open " + path);
  const std::uint32_t magic = detail::read_be32(in);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xFF) != 0x08)
    throw ContractError("idx: only unsigned-byte arrays are supported (" + path + ")");
  IdxArray a;
  const std::size_t rank = magic & 0xFF;
  std::size_t n = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    a.dims.push_back(detail::read_be32(in));
    n *= a.dims.back();
  }
  a.data.resize(n);
  if (!in.read(reinterpret_cast<char*>(a.data.data()), std::streamsize(n))) throw ContractError("idx: truncated payload");
  return a;
}

/// Images scaled to [0, 1] with sample shape (1, H, W).
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_idx(images_path);
  const auto labels = read_idx(labels_path);
  if (images.dims.size() != 3 || labels.dims.size() != 1 || images.dims[0] != labels.dims[0])
    throw ContractError("idx: expected (N, H, W) images and (N) labels");
  Dataset d;
  d.sample_shape = {1, images.dims[1], images.dims[2]};
  d.samples.reserve(images.data.size());
  for (auto v : images.data) d.samples.push_back(double(v) / 255.0);
  int max_label = 0;
  for (auto l : labels.data) {
    d.labels.push_back(int(l));
    max_label = std::max(max_label, int(l));
  }
  d.classes = std::size_t(max_label) + 1;
  return d;
}

}  // namespace semisfl
