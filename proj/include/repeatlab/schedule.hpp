#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "repeatlab/common.hpp"
#include "repeatlab/rng.hpp"

namespace repeatlab {

// Sentinel subset size: sample fresh data every batch.
inline constexpr long kOnline = -1;

struct Phase {
  enum class Dur { Steps, Epochs, Auto };
  long size = 0;  // subset row count, or kOnline
  Dur dur = Dur::Steps;
  long amount = 0;  // steps or epochs; ignored for Auto
};

struct PhaseSchedule {
  std::vector<Phase> phases;
  long batch = 128;  // 0 = full batch (B = subset size)
  bool nested = true;
  bool without_replacement = false;  // epoch-shuffled indices instead of iid draws
  double auto_acc_threshold = 0.75;
  long auto_max_epochs = 50;

  void validate() const {
    if (phases.empty()) throw ConfigError("schedule needs at least one phase");
    if (batch < 0) throw ConfigError("batch must be >= 0 (0 = full batch)");
    long prev = 0;
    for (size_t i = 0; i < phases.size(); ++i) {
      const Phase& ph = phases[i];
      if (ph.size == kOnline) {
        if (i + 1 != phases.size())
          throw ConfigError("ONLINE is valid only for the final phase");
        if (batch == 0) throw ConfigError("ONLINE phase requires an explicit batch size");
      } else if (ph.size < 1) {
        throw ConfigError("phase size must be >= 1");
      } else {
        if (nested && ph.size < prev)
          throw ConfigError("nested schedule sizes must be nondecreasing");
        prev = ph.size;
      }
      if (ph.dur != Phase::Dur::Auto && ph.amount < 0)
        throw ConfigError("phase duration must be >= 0");
    }
    if (auto_acc_threshold <= 0.0 || auto_acc_threshold > 1.0)
      throw ConfigError("auto accuracy threshold must lie in (0, 1]");
    if (auto_max_epochs < 1) throw ConfigError("auto_max_epochs must be >= 1");
  }

  // Largest offline subset; the master dataset must hold this many rows.
  long max_offline_size() const {
    long m = 0;
    for (const Phase& ph : phases)
      if (ph.size != kOnline) m = std::max(m, ph.size);
    return m;
  }
};

// Geometric phase sizes between online_total/320 and online_total/50, all in
// auto-advance mode.
inline std::vector<Phase> auto_phases(long online_total, int n_phases = 6) {
  if (online_total < 320) throw ConfigError("auto schedule needs online_total >= 320");
  if (n_phases < 2) throw ConfigError("auto schedule needs at least two phases");
  const double lo = static_cast<double>(online_total) / 320.0;
  const double hi = static_cast<double>(online_total) / 50.0;
  const double ratio = std::pow(hi / lo, 1.0 / static_cast<double>(n_phases - 1));
  std::vector<Phase> out;
  out.reserve(static_cast<size_t>(n_phases));
  for (int i = 0; i < n_phases; ++i) {
    Phase ph;
    ph.size = std::max<long>(1, std::lround(lo * std::pow(ratio, i)));
    ph.dur = Phase::Dur::Auto;
    out.push_back(ph);
  }
  return out;
}

struct ComputeLedger {
  long steps = 0;
  long long compute = 0;  // cumulative sum of batch sizes
  std::vector<long long> per_phase;

  void record_step(long batch, int phase_idx) {
    if (batch < 1) throw ConfigError("recorded batch size must be >= 1");
    steps += 1;
    compute += batch;
    if (static_cast<int>(per_phase.size()) <= phase_idx)
      per_phase.resize(static_cast<size_t>(phase_idx) + 1, 0);
    per_phase[static_cast<size_t>(phase_idx)] += batch;
  }
};

// steps per epoch for a fixed subset: ceil(N / B); full batch = one step.
inline long steps_per_epoch(long subset_size, long batch) {
  if (batch == 0 || batch >= subset_size) return 1;
  return (subset_size + batch - 1) / batch;
}

// Advancement rule. Steps/Epochs phases advance exactly at the configured
// count; Auto advances at an epoch boundary once train accuracy crosses the
// threshold or the epoch cap is hit.
inline bool should_advance(const PhaseSchedule& sched, const Phase& phase, long epochs_done,
                           double train_acc, long steps_done_in_phase, long spe) {
  switch (phase.dur) {
    case Phase::Dur::Steps:
      return steps_done_in_phase >= phase.amount;
    case Phase::Dur::Epochs:
      return steps_done_in_phase >= phase.amount * spe;
    case Phase::Dur::Auto:
      return train_acc >= sched.auto_acc_threshold || epochs_done >= sched.auto_max_epochs;
  }
  return false;
}

// Batch index source for one fixed-subset phase: uniform with replacement by
// default, epoch-shuffled without replacement behind the flag, or the whole
// subset in order for full-batch mode.
class BatchCursor {
 public:
  BatchCursor(long subset_size, long batch, bool without_replacement, uint64_t seed)
      : n_(subset_size),
        batch_(batch == 0 ? subset_size : batch),
        full_(batch == 0),
        without_replacement_(without_replacement),
        rng_(seed) {
    if (n_ < 1) throw ConfigError("batch cursor needs a non-empty subset");
  }

  long batch_size() const { return batch_; }

  std::vector<long> next_indices() {
    std::vector<long> idx(static_cast<size_t>(batch_));
    if (full_) {
      std::iota(idx.begin(), idx.end(), 0);
      return idx;
    }
    if (!without_replacement_) {
      for (long& v : idx) v = static_cast<long>(rng_.below(static_cast<uint64_t>(n_)));
      return idx;
    }
    for (long& v : idx) {
      if (pos_ == static_cast<long>(perm_.size())) reshuffle();
      v = perm_[static_cast<size_t>(pos_++)];
    }
    return idx;
  }

 private:
  void reshuffle() {
    if (perm_.empty()) {
      perm_.resize(static_cast<size_t>(n_));
      std::iota(perm_.begin(), perm_.end(), 0);
    }
    for (long i = n_ - 1; i > 0; --i) {
      long j = static_cast<long>(rng_.below(static_cast<uint64_t>(i) + 1));
      std::swap(perm_[static_cast<size_t>(i)], perm_[static_cast<size_t>(j)]);
    }
    pos_ = 0;
  }

  long n_;
  long batch_;
  bool full_;
  bool without_replacement_;
  Rng rng_;
  std::vector<long> perm_;
  long pos_ = 0;
};

}  // namespace repeatlab
