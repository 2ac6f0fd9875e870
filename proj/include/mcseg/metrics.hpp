#ifndef MCSEG_METRICS_HPP
#define MCSEG_METRICS_HPP

#include "mcseg/core.hpp"

#include <array>
#include <cstdint>

namespace mcseg {

struct ComponentResult {
  LabelMap labels;
  bool empty_warning = false;  // input had no foreground
  std::size_t kept_voxels = 0;
  int components = 0;
};

// Keeps the largest 26-connected component of the foreground union (labels > 0),
// preserving class codes inside it. Ties go to the component found first in
// memory order.
ComponentResult largest_component(const LabelMap& labels);

struct ClassCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  // 2TP / (2TP + FP + FN); 1.0 when the class is absent from both maps.
  double dice() const;
};

struct DiceScore {
  ClassCounts pool;
  ClassCounts myocardium;

  double pool_dice() const { return pool.dice(); }
  double myocardium_dice() const { return myocardium.dice(); }
  double mean() const { return 0.5 * (pool_dice() + myocardium_dice()); }
};

// Per-class overlap over the full volume. Throws std::invalid_argument on shape mismatch.
DiceScore dice_3d(const LabelMap& pred, const LabelMap& truth);

}  // namespace mcseg

#endif  // MCSEG_METRICS_HPP
