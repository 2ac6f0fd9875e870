#include "mcseg/core.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace mcseg {

std::string to_string(const Shape3& s) {
  std::ostringstream os;
  os << s.rows << "x" << s.cols << "x" << s.slices;
  return os.str();
}

void CenterRegistry::add(CenterProfile profile) {
  if (profile.center_id.empty()) throw std::invalid_argument("center_id must not be empty");
  if (centers_.count(profile.center_id))
    throw std::invalid_argument("duplicate center_id: " + profile.center_id);
  if (profile.typical_in_plane_mm[0] > profile.typical_in_plane_mm[1] ||
      profile.typical_thickness_mm[0] > profile.typical_thickness_mm[1])
    throw std::invalid_argument("center " + profile.center_id + ": range min exceeds max");
  auto id = profile.center_id;
  centers_.emplace(id, std::make_shared<const CenterProfile>(std::move(profile)));
}

const CenterProfile& CenterRegistry::at(const std::string& center_id) const {
  return *get(center_id);
}

std::shared_ptr<const CenterProfile> CenterRegistry::get(const std::string& center_id) const {
  auto it = centers_.find(center_id);
  if (it == centers_.end()) throw std::out_of_range("unknown center_id: " + center_id);
  return it->second;
}

bool CenterRegistry::contains(const std::string& center_id) const {
  return centers_.count(center_id) != 0;
}

std::vector<std::string> CenterRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : centers_) out.push_back(id);
  return out;
}

CenterRegistry CenterRegistry::reference_centers() {
  CenterRegistry reg;
  reg.add({"EMIDEC", "France", "1.5T and 3T Siemens", 10.0, {1.37, 1.88}, {8.0, 13.0}});
  reg.add({"MSCMR", "China", "1.5T Philips", std::nullopt, {0.75, 0.75}, {5.0, 5.0}});
  reg.add({"VH", "Spain", "1.5T GE", 10.0, {1.48, 1.68}, {10.0, 10.0}});
  reg.add({"STPAU", "Spain", "1.5T Philips", 8.5, {1.18, 1.18}, {5.0, 5.0}});
  return reg;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "unassigned";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw std::invalid_argument("unknown split: " + s);
}

const std::string& CaseRecord::center_id() const {
  static const std::string none;
  return center ? center->center_id : none;
}

std::vector<Violation> validate_case(const CaseRecord& c) {
  std::vector<Violation> out;
  if (c.case_id.empty()) out.push_back({"case_id", "case_id is empty"});
  if (!c.center) out.push_back({"center", "case has no center profile"});

  const Shape3& s = c.image.shape();
  if (s.rows < 1 || s.cols < 1 || s.slices < 1)
    out.push_back({"shape", "image shape components must be >= 1, got " + to_string(s)});
  if (c.image.voxels.size() != s.size())
    out.push_back({"shape", "voxel buffer does not match shape"});

  const Spacing& sp = c.image.spacing;
  if (!(sp.row_mm > 0 && sp.col_mm > 0 && sp.slice_mm > 0))
    out.push_back({"spacing", "spacing components must be > 0"});

  for (float v : c.image.voxels.values()) {
    if (!std::isfinite(v)) {
      out.push_back({"finite", "image contains NaN or Inf"});
      break;
    }
  }

  if (c.labels) {
    if (!(c.labels->shape() == s))
      out.push_back({"shape mismatch", "labels " + to_string(c.labels->shape()) +
                                           " vs image " + to_string(s)});
    for (auto v : c.labels->values()) {
      if (v > 2) {
        out.push_back({"label codes", "label value " + std::to_string(int(v)) +
                                          " outside {0,1,2}"});
        break;
      }
    }
  }
  return out;
}

std::vector<Violation> validate_dataset(const std::vector<CaseRecord>& cases) {
  std::vector<Violation> out;
  std::set<std::string> seen;
  for (const auto& c : cases) {
    for (auto& v : validate_case(c)) {
      v.detail = c.case_id + ": " + v.detail;
      out.push_back(std::move(v));
    }
    if (!seen.insert(c.case_id).second)
      out.push_back({"case_id unique", "duplicate case_id " + c.case_id});
  }
  return out;
}

void SplitSpec::validate() const {
  if (train_fraction < 0 || val_fraction < 0 ||
      std::abs(train_fraction + val_fraction - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (test_count < 0) throw ConfigError("test_count must be >= 0");
}

}  // namespace mcseg
