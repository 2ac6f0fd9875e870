#include "mcseg/bundle.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace mcseg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'C', 'S', 'E', 'G', 'W', '0', '1'};

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian hosts");

std::uint32_t crc_of(const std::vector<char>& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void WeightArchive::write(const std::filesystem::path& path) const {
  std::vector<char> payload;
  json h = header;
  h["tensors"] = json::array();
  for (const auto& [name, data] : tensors) {
    h["tensors"].push_back({{"name", name}, {"size", data.size()}, {"offset", payload.size()}});
    const auto* p = reinterpret_cast<const char*>(data.data());
    payload.insert(payload.end(), p, p + data.size() * sizeof(float));
  }
  h["payload_bytes"] = payload.size();
  h["crc32"] = crc_of(payload);
  const std::string text = h.dump();
  const std::uint64_t len = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArchiveError("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw ArchiveError("write failed: " + path.string());
}

WeightArchive WeightArchive::read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArchiveError("missing file: " + path.string());
  const std::string where = "corrupt archive " + path.string() + ": ";
  char magic[8];
  std::uint64_t len = 0;
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ArchiveError(where + "bad magic");
  if (!is.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ull << 32))
    throw ArchiveError(where + "bad header length");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ArchiveError(where + "truncated header");
  WeightArchive a;
  try {
    a.header = json::parse(text);
    const std::size_t bytes = a.header.at("payload_bytes").get<std::size_t>();
    std::vector<char> payload(bytes);
    if (!is.read(payload.data(), static_cast<std::streamsize>(bytes))) throw ArchiveError(where + "truncated payload");
    if (is.peek() != std::char_traits<char>::eof()) throw ArchiveError(where + "trailing bytes");
    if (crc_of(payload) != a.header.at("crc32").get<std::uint32_t>()) throw ArchiveError(where + "checksum mismatch");
    for (const auto& t : a.header.at("tensors")) {
      const auto size = t.at("size").get<std::size_t>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (offset + size * sizeof(float) > bytes) throw ArchiveError(where + "tensor outside payload");
      std::vector<float> v(size);
      std::memcpy(v.data(), payload.data() + offset, size * sizeof(float));
      a.tensors[t.at("name").get<std::string>()] = std::move(v);
    }
  } catch (const json::exception& e) {
    throw ArchiveError(where + e.what());
  }
  return a;
}

json to_json(const NetworkConfig& c) {
  return {{"levels", c.levels},
          {"base_features", c.base_features},
          {"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"leaky_slope", c.leaky_slope},
          {"deep_supervision_heads", c.deep_supervision_heads},
          {"desk_scale", c.desk_scale}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig c;
  c.levels = j.value("levels", c.levels);
  c.base_features = j.value("base_features", c.base_features);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
  c.deep_supervision_heads = j.value("deep_supervision_heads", c.deep_supervision_heads);
  c.desk_scale = j.value("desk_scale", c.desk_scale);
  return c;
}

std::string ModelBundle::weights_digest() {
  std::uint64_t h = 1469598103934665603ull;
  for (auto* p : net.params()) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (Eigen::Index i = 0; i < p->value.size() * Eigen::Index(sizeof(float)); ++i)
      h = (h ^ bytes[i]) * 1099511628211ull;
  }
  return hex64(h);
}

ModelBundle build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  ModelBundle b(cfg);
  b.net.init(seed);
  b.provenance.seed = seed;
  b.provenance.bundle_id = b.weights_digest();
  return b;
}

void save_bundle(ModelBundle& bundle, const std::filesystem::path& path) {
  if (!bundle.provenance.parent_id.empty() && bundle.provenance.parent_id == bundle.provenance.bundle_id)
    throw ArchiveError("provenance cycle: bundle is its own parent");
  WeightArchive a;
  const auto& p = bundle.provenance;
  a.header["kind"] = "segnet";
  a.header["config"] = to_json(bundle.config());
  a.header["block_index"] = bundle.net.block_index();
  a.header["trainable_flags"] = bundle.net.trainable_flags();
  a.header["provenance"] = {{"bundle_id", p.bundle_id},   {"training_centers", p.training_centers},
                            {"epochs", p.epochs},         {"seed", p.seed},
                            {"parent_id", p.parent_id},   {"note", p.note}};
  for (auto* param : bundle.net.params())
    a.tensors[param->name] = std::vector<float>(param->value.data(), param->value.data() + param->value.size());
  a.write(path);
}

namespace {

// Blocks whose parameter names or sizes differ between two configs.
std::vector<std::string> mismatched_blocks(const NetworkConfig& stored, const NetworkConfig& wanted) {
  UNet<float> a(stored), b(wanted);
  std::set<std::string> blocks;
  for (const auto& n : a.block_names()) blocks.insert(n);
  for (const auto& n : b.block_names()) blocks.insert(n);
  const auto an = a.block_names(), bn = b.block_names();
  std::vector<std::string> out;
  for (const auto& blk : blocks) {
    const bool in_a = std::find(an.begin(), an.end(), blk) != an.end();
    const bool in_b = std::find(bn.begin(), bn.end(), blk) != bn.end();
    if (!in_a || !in_b) {
      out.push_back(blk);
      continue;
    }
    auto pa = a.block_params(blk), pb = b.block_params(blk);
    bool same = pa.size() == pb.size();
    for (std::size_t i = 0; same && i < pa.size(); ++i)
      same = pa[i]->name == pb[i]->name && pa[i]->value.size() == pb[i]->value.size();
    if (!same) out.push_back(blk);
  }
  return out;
}

}  // namespace

ModelBundle load_bundle(const std::filesystem::path& path, const NetworkConfig* expected) {
  const WeightArchive a = WeightArchive::read(path);
  const std::string where = "corrupt archive " + path.string() + ": ";
  NetworkConfig cfg;
  try {
    if (a.header.value("kind", "") != "segnet") throw ArchiveError(where + "not a segmentation bundle");
    cfg = network_config_from_json(a.header.at("config"));
  } catch (const json::exception& e) {
    throw ArchiveError(where + e.what());
  }
  if (expected && !(cfg.resolved() == expected->resolved())) {
    const auto bad = mismatched_blocks(cfg, *expected);
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    throw CompatibilityError("incompatible bundle " + path.string() + ": network config differs; mismatched blocks: " +
                             (list.empty() ? "(none, hyperparameters only)" : list));
  }
  ModelBundle b(cfg);
  for (auto* p : b.net.params()) {
    const auto it = a.tensors.find(p->name);
    if (it == a.tensors.end()) throw ArchiveError(where + "missing tensor " + p->name);
    if (static_cast<Eigen::Index>(it->second.size()) != p->value.size())
      throw ArchiveError(where + "size mismatch for " + p->name);
    std::memcpy(p->value.data(), it->second.data(), it->second.size() * sizeof(float));
  }
  if (a.tensors.size() != b.net.params().size()) throw ArchiveError(where + "unexpected extra tensors");
  try {
    const auto& pj = a.header.at("provenance");
    b.provenance.bundle_id = pj.value("bundle_id", "");
    b.provenance.training_centers = pj.value("training_centers", std::vector<std::string>{});
    b.provenance.epochs = pj.value("epochs", 0);
    b.provenance.seed = pj.value("seed", std::uint64_t{0});
    b.provenance.parent_id = pj.value("parent_id", "");
    b.provenance.note = pj.value("note", "");
    if (a.header.contains("trainable_flags"))
      for (const auto& [blk, on] : a.header["trainable_flags"].items())
        for (auto* p : b.net.block_params(blk)) p->trainable = on.get<bool>();
  } catch (const json::exception& e) {
    throw ArchiveError(where + e.what());
  } catch (const std::invalid_argument& e) {
    throw ArchiveError(where + e.what());
  }
  return b;
}

}  // namespace mcseg
