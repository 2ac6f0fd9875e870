#ifndef MCSEG_BUNDLE_HPP
#define MCSEG_BUNDLE_HPP

#include "mcseg/core.hpp"
#include "mcseg/unet.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mcseg {

class ArchiveError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// Single-file weight container:
//   8 bytes  magic "MCSEGW01"
//   8 bytes  little-endian header length
//   header   JSON; "tensors" lists {name, size, offset} into the payload
//   payload  raw little-endian float32 data, guarded by a CRC-32 in the header
struct WeightArchive {
  nlohmann::json header;
  std::map<std::string, std::vector<float>> tensors;

  void write(const std::filesystem::path& path) const;
  static WeightArchive read(const std::filesystem::path& path);
};

struct Provenance {
  std::string bundle_id;
  std::vector<std::string> training_centers;
  int epochs = 0;
  std::uint64_t seed = 0;
  std::string parent_id;  // empty for a network trained from scratch
  std::string note;

  bool operator==(const Provenance&) const = default;
};

nlohmann::json to_json(const NetworkConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);

struct ModelBundle {
  explicit ModelBundle(const NetworkConfig& cfg) : net(cfg) {}

  UNet<float> net;
  Provenance provenance;

  const NetworkConfig& config() const { return net.config(); }
  // Content hash of the weights, in hex.
  std::string weights_digest();
};

// Randomly initialized network; same config and seed give bit-identical weights.
ModelBundle build_network(const NetworkConfig& cfg, std::uint64_t seed);

void save_bundle(ModelBundle& bundle, const std::filesystem::path& path);
// With `expected` set, a config mismatch raises CompatibilityError naming every
// block whose parameter shapes differ.
ModelBundle load_bundle(const std::filesystem::path& path, const NetworkConfig* expected = nullptr);

}  // namespace mcseg

#endif  // MCSEG_BUNDLE_HPP
