#ifndef MCSEG_DATASET_HPP
#define MCSEG_DATASET_HPP

#include "mcseg/core.hpp"
#include "mcseg/nifti.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcseg {

struct ManifestRow {
  std::string case_id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> labels;
};

struct DatasetManifest {
  std::string center_id;
  std::vector<ManifestRow> cases;
  std::map<int, int> label_remap;  // source code -> {0,1,2}
  std::filesystem::path base_dir;  // relative paths resolve against this

  // Parses {center_id, cases:[{id, image, labels?}], label_remap?}.
  static DatasetManifest load(const std::filesystem::path& json_path);
  void save(const std::filesystem::path& json_path) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// One CaseRecord per manifest row with label_remap applied. The center profile
// comes from `registry` when it knows the center, otherwise a bare profile is made.
std::vector<CaseRecord> load_dataset(const DatasetManifest& manifest,
                                     const CenterRegistry* registry = nullptr);

// Writes <dir>/<case_id>_image.nii.gz (+ _labels.nii.gz) and <dir>/manifest.json.
DatasetManifest save_dataset(const std::vector<CaseRecord>& cases, const std::string& center_id,
                             const std::filesystem::path& dir);

// Draws test_count cases first, then splits the rest train/val with the
// validation count rounded down. Same seed gives the same assignment.
std::vector<CaseRecord> assign_splits(std::vector<CaseRecord> cases, const SplitSpec& spec);

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};
SplitCounts split_counts(int population, const SplitSpec& spec);

void write_splits_csv(const std::filesystem::path& path, const std::vector<CaseRecord>& cases);
std::map<std::string, Split> read_splits_csv(const std::filesystem::path& path);

std::vector<CaseRecord> select_split(const std::vector<CaseRecord>& cases, Split s);

}  // namespace mcseg

#endif  // MCSEG_DATASET_HPP
