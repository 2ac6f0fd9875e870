#include "mcseg/metrics.hpp"

#include <stdexcept>
#include <vector>

namespace mcseg {

ComponentResult largest_component(const LabelMap& labels) {
  const Shape3 s = labels.shape();
  const auto& in = labels.values();
  std::vector<int> comp(in.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> stack;

  for (std::size_t seed = 0; seed < in.size(); ++seed) {
    if (in[seed] == 0 || comp[seed] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t count = 0;
    comp[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ++count;
      const int z = static_cast<int>(v / s.plane());
      const int r = static_cast<int>((v % s.plane()) / s.cols);
      const int c = static_cast<int>(v % s.cols);
      for (int dz = -1; dz <= 1; ++dz) {
        const int zz = z + dz;
        if (zz < 0 || zz >= s.slices) continue;
        for (int dr = -1; dr <= 1; ++dr) {
          const int rr = r + dr;
          if (rr < 0 || rr >= s.rows) continue;
          for (int dc = -1; dc <= 1; ++dc) {
            const int cc = c + dc;
            if (cc < 0 || cc >= s.cols) continue;
            const std::size_t u = labels.index(rr, cc, zz);
            if (in[u] != 0 && comp[u] < 0) {
              comp[u] = id;
              stack.push_back(u);
            }
          }
        }
      }
    }
    sizes.push_back(count);
  }

  ComponentResult out{labels, sizes.empty(), 0, static_cast<int>(sizes.size())};
  if (sizes.empty()) return out;
  int best = 0;
  for (int i = 1; i < static_cast<int>(sizes.size()); ++i)
    if (sizes[i] > sizes[best]) best = i;
  auto& dst = out.labels.values();
  for (std::size_t i = 0; i < dst.size(); ++i)
    if (comp[i] != best) dst[i] = 0;
  out.kept_voxels = sizes[best];
  return out;
}

double ClassCounts::dice() const {
  const std::uint64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return double(2 * tp) / double(denom);
}

DiceScore dice_3d(const LabelMap& pred, const LabelMap& truth) {
  if (!(pred.shape() == truth.shape()))
    throw std::invalid_argument("dice_3d: shape mismatch " + to_string(pred.shape()) + " vs " +
                                to_string(truth.shape()));
  DiceScore d;
  const auto& p = pred.values();
  const auto& t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (int cls = 1; cls <= 2; ++cls) {
      ClassCounts& cc = cls == 1 ? d.pool : d.myocardium;
      const bool pp = p[i] == cls, tt = t[i] == cls;
      cc.tp += pp && tt;
      cc.fp += pp && !tt;
      cc.fn += !pp && tt;
    }
  }
  return d;
}

}  // namespace mcseg
