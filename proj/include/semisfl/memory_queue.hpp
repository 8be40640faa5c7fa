#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <vector>

#include "semisfl/losses.hpp"

namespace semisfl {

enum class QueueLevel { supervised, unsupervised };

struct QueueEntry {
  std::vector<double> feature;  // unit L2 norm
  int label = 0;
  double confidence = 1.0;
  QueueLevel level = QueueLevel::unsupervised;
  std::uint64_t inserted = 0;
};

using QueueSnapshot = std::shared_ptr<const std::vector<QueueEntry>>;

struct QueueStats {
  std::size_t supervised = 0;
  std::size_t unsupervised = 0;
  std::map<int, std::size_t> per_class;
  double mean_confidence = 0.0;
  std::uint64_t eviction_credits = 0;
};

/// Two FIFO levels of projected teacher features. Unsupervised evictions earn one
/// supervised-eviction credit per `ratio` evictions; an over-full supervised level
/// spends credits to evict, and otherwise keeps its surplus as long as the total
/// stays within sup_capacity + unsup_capacity.
class MemoryQueue {
 public:
  MemoryQueue(std::size_t sup_capacity = 512, std::size_t unsup_capacity = 2048, std::size_t ratio = 4)
      : sup_capacity_(sup_capacity), unsup_capacity_(unsup_capacity), ratio_(ratio) {
    if (ratio_ == 0) throw ContractError("queue eviction ratio must be >= 1");
  }

  void enqueue(const std::vector<QueueEntry>& entries, QueueLevel level) {
    for (const auto& e : entries) {
      double n2 = 0.0;
      for (double v : e.feature) n2 += v * v;
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) throw ContractError("queue entries must be L2-normalized");
      if (width_ == 0) width_ = e.feature.size();
      if (e.feature.size() != width_) throw ContractError("queue entry width mismatch");
    }
    for (const auto& e : entries) {
      QueueEntry copy = e;
      copy.level = level;
      copy.inserted = counter_++;
      if (level == QueueLevel::supervised) {
        copy.confidence = 1.0;
        sup_.push_back(std::move(copy));
      } else {
        unsup_.push_back(std::move(copy));
        while (unsup_.size() > unsup_capacity_) {
          unsup_.pop_front();
          if (++unsup_evictions_ % ratio_ == 0) ++credits_;
        }
      }
      settle();
    }
  }

  QueueSnapshot snapshot() const {
    auto out = std::make_shared<std::vector<QueueEntry>>();
    out->reserve(size());
    out->insert(out->end(), sup_.begin(), sup_.end());
    out->insert(out->end(), unsup_.begin(), unsup_.end());
    return out;
  }

  QueueStats stats() const {
    QueueStats s;
    s.supervised = sup_.size();
    s.unsupervised = unsup_.size();
    s.eviction_credits = credits_;
    double conf = 0.0;
    for (const auto* level : {&sup_, &unsup_})
      for (const auto& e : *level) {
        ++s.per_class[e.label];
        conf += e.confidence;
      }
    if (size()) s.mean_confidence = conf / double(size());
    return s;
  }

  std::size_t size() const { return sup_.size() + unsup_.size(); }
  std::size_t capacity() const { return sup_capacity_ + unsup_capacity_; }
  std::uint64_t credits() const { return credits_; }
  std::uint64_t unsupervised_evictions() const { return unsup_evictions_; }

 private:
  void settle() {
    while (sup_.size() > sup_capacity_ && credits_ > 0) {
      sup_.pop_front();
      --credits_;
    }
    while (size() > capacity() && !sup_.empty() && sup_.size() > sup_capacity_) sup_.pop_front();
    // A supervised level at or below its own capacity cannot push the total over
    // the bound because the unsupervised level is capped independently.
  }

  std::size_t sup_capacity_, unsup_capacity_, ratio_;
  std::size_t width_ = 0;
  std::deque<QueueEntry> sup_, unsup_;
  std::uint64_t counter_ = 0;
  std::uint64_t unsup_evictions_ = 0;
  std::uint64_t credits_ = 0;
};

inline ReferenceSet to_references(const std::vector<QueueEntry>& entries) {
  ReferenceSet refs;
  for (const auto& e : entries) refs.add(e.feature.data(), e.feature.size(), e.label, e.confidence);
  return refs;
}

}  // namespace semisfl
