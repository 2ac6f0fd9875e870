#include "mcseg/unet.hpp"

#include <algorithm>

namespace mcseg {

NetworkConfig NetworkConfig::resolved() const {
  NetworkConfig c = *this;
  if (c.desk_scale) {
    c.levels = 4;
    c.base_features = 8;
    c.deep_supervision_heads = std::min(c.deep_supervision_heads, c.levels - 2);
  }
  return c;
}

void NetworkConfig::validate() const {
  if (levels < 2) throw ConfigError("network.levels must be >= 2");
  if (base_features < 1) throw ConfigError("network.base_features must be >= 1");
  if (in_channels != 1) throw ConfigError("network.in_channels must be 1");
  if (num_classes != 3) throw ConfigError("network.num_classes must be 3");
  if (leaky_slope < 0) throw ConfigError("network.leaky_slope must be >= 0");
  if (deep_supervision_heads < 0 || deep_supervision_heads > levels - 2)
    throw ConfigError("network.deep_supervision_heads must be in [0, levels - 2]");
}

std::vector<int> NetworkConfig::widths() const {
  std::vector<int> w;
  long f = base_features;
  for (int i = 0; i < levels; ++i, f *= 2) w.push_back(static_cast<int>(std::min<long>(f, 1024)));
  return w;
}

NetPart net_part_from_string(const std::string& s) {
  if (s == "encoder") return NetPart::encoder;
  if (s == "decoder") return NetPart::decoder;
  throw ConfigError("part must be 'encoder' or 'decoder', got '" + s + "'");
}

std::string to_string(NetPart p) { return p == NetPart::encoder ? "encoder" : "decoder"; }

}  // namespace mcseg
