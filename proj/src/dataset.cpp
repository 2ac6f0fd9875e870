#include "mcseg/dataset.hpp"

#include "mcseg/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace mcseg {

using nlohmann::json;
namespace fs = std::filesystem;

DatasetManifest DatasetManifest::load(const fs::path& json_path) {
  std::ifstream is(json_path);
  if (!is) throw DataError("missing file: " + json_path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + json_path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = json_path.parent_path();
  try {
    m.center_id = j.at("center_id").get<std::string>();
    for (const auto& row : j.at("cases")) {
      ManifestRow r;
      r.case_id = row.at("id").get<std::string>();
      r.image = row.at("image").get<std::string>();
      if (row.contains("labels") && !row["labels"].is_null()) r.labels = row["labels"].get<std::string>();
      m.cases.push_back(std::move(r));
    }
    if (j.contains("label_remap"))
      for (const auto& [k, v] : j["label_remap"].items()) m.label_remap[std::stoi(k)] = v.get<int>();
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + json_path.string() + ": " + e.what());
  }
  for (const auto& [src, dst] : m.label_remap)
    if (dst < 0 || dst > 2)
      throw DataError("remap error: target " + std::to_string(dst) + " for code " +
                      std::to_string(src) + " is outside {0,1,2}");
  return m;
}

void DatasetManifest::save(const fs::path& json_path) const {
  json j;
  j["center_id"] = center_id;
  j["cases"] = json::array();
  for (const auto& r : cases) {
    json row{{"id", r.case_id}, {"image", r.image.generic_string()}};
    if (r.labels) row["labels"] = r.labels->generic_string();
    j["cases"].push_back(row);
  }
  if (!label_remap.empty()) {
    json remap = json::object();
    for (const auto& [k, v] : label_remap) remap[std::to_string(k)] = v;
    j["label_remap"] = remap;
  }
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::ofstream(json_path) << j.dump(2) << "\n";
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

namespace {

LabelMap to_labels(const Volume& raw, const std::map<int, int>& remap, const fs::path& path) {
  LabelMap out(raw.shape());
  const auto& in = raw.voxels.values();
  auto& dst = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const int code = static_cast<int>(std::lround(in[i]));
    auto it = remap.find(code);
    int mapped = code;
    if (it != remap.end()) mapped = it->second;
    if (mapped < 0 || mapped > 2)
      throw DataError("remap error: label code " + std::to_string(code) + " in " + path.string() +
                      " has no mapping into {0,1,2}");
    dst[i] = static_cast<std::uint8_t>(mapped);
  }
  return out;
}

}  // namespace

std::vector<CaseRecord> load_dataset(const DatasetManifest& manifest, const CenterRegistry* registry) {
  std::shared_ptr<const CenterProfile> center;
  if (registry && registry->contains(manifest.center_id)) {
    center = registry->get(manifest.center_id);
  } else {
    CenterProfile p;
    p.center_id = manifest.center_id;
    center = std::make_shared<const CenterProfile>(std::move(p));
  }

  std::vector<CaseRecord> out;
  out.reserve(manifest.cases.size());
  for (const auto& row : manifest.cases) {
    CaseRecord c;
    c.case_id = row.case_id;
    c.center = center;
    const fs::path img_path = manifest.resolve(row.image);
    c.image = read_nifti(img_path);
    if (row.labels) {
      const fs::path lab_path = manifest.resolve(*row.labels);
      const Volume raw = read_nifti(lab_path);
      if (!(raw.shape() == c.image.shape()))
        throw DataError("shape mismatch for case " + row.case_id + ": labels " +
                        to_string(raw.shape()) + " vs image " + to_string(c.image.shape()));
      c.labels = to_labels(raw, manifest.label_remap, lab_path);
    }
    auto report = validate_case(c);
    if (!report.empty())
      throw DataError("case " + row.case_id + " failed validation: " + report.front().invariant +
                      " (" + report.front().detail + ")");
    out.push_back(std::move(c));
  }
  return out;
}

DatasetManifest save_dataset(const std::vector<CaseRecord>& cases, const std::string& center_id,
                             const fs::path& dir) {
  DatasetManifest m;
  m.center_id = center_id;
  m.base_dir = dir;
  fs::create_directories(dir);
  for (const auto& c : cases) {
    ManifestRow r;
    r.case_id = c.case_id;
    r.image = c.case_id + "_image.nii.gz";
    write_nifti(dir / r.image, c.image);
    if (c.labels) {
      r.labels = c.case_id + "_labels.nii.gz";
      write_nifti_labels(dir / *r.labels, *c.labels, c.image.spacing);
    }
    m.cases.push_back(std::move(r));
  }
  m.save(dir / "manifest.json");
  return m;
}

SplitCounts split_counts(int population, const SplitSpec& spec) {
  spec.validate();
  if (spec.test_count >= population)
    throw ConfigError("split error: test_count " + std::to_string(spec.test_count) +
                      " must be smaller than the population " + std::to_string(population));
  SplitCounts c;
  c.test = spec.test_count;
  const int pool = population - c.test;
  c.val = static_cast<int>(std::floor(spec.val_fraction * pool + 1e-9));
  c.train = pool - c.val;
  return c;
}

std::vector<CaseRecord> assign_splits(std::vector<CaseRecord> cases, const SplitSpec& spec) {
  const SplitCounts counts = split_counts(static_cast<int>(cases.size()), spec);
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);
  for (std::size_t r = 0; r < order.size(); ++r) {
    Split s = Split::train;
    if (r < std::size_t(counts.test))
      s = Split::test;
    else if (r < std::size_t(counts.test + counts.val))
      s = Split::val;
    cases[order[r]].split = s;
  }
  return cases;
}

void write_splits_csv(const fs::path& path, const std::vector<CaseRecord>& cases) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  os << "case_id,center_id,split\n";
  for (const auto& c : cases) os << c.case_id << "," << c.center_id() << "," << to_string(c.split) << "\n";
}

std::map<std::string, Split> read_splits_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing file: " + path.string());
  std::map<std::string, Split> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, center, split;
    std::getline(ss, id, ',');
    std::getline(ss, center, ',');
    std::getline(ss, split, ',');
    out[id] = split_from_string(split);
  }
  return out;
}

std::vector<CaseRecord> select_split(const std::vector<CaseRecord>& cases, Split s) {
  std::vector<CaseRecord> out;
  for (const auto& c : cases)
    if (c.split == s) out.push_back(c);
  return out;
}

}  // namespace mcseg
