#include "mcseg/bundle.hpp"
#include "mcseg/dataset.hpp"
#include "mcseg/nifti.hpp"
#include "mcseg/synthgen.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace mcseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mcseg_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Hand-assembled NIfTI-1 file with int16 voxels and a linear scaling.
void write_int16_nifti(const fs::path& p, int nx, int ny, int nz, const std::vector<std::int16_t>& v, float slope,
                       float inter) {
  char h[352] = {};
  auto put = [&](int off, const auto& x) { std::memcpy(h + off, &x, sizeof x); };
  put(0, std::int32_t(348));
  const std::int16_t dim[8] = {3, std::int16_t(nx), std::int16_t(ny), std::int16_t(nz), 1, 1, 1, 1};
  std::memcpy(h + 40, dim, sizeof dim);
  put(70, std::int16_t(4));   // DT_INT16
  put(72, std::int16_t(16));  // bitpix
  const float pix[8] = {1.f, 0.8f, 0.9f, 7.5f, 1, 1, 1, 1};
  std::memcpy(h + 76, pix, sizeof pix);
  put(108, 352.f);
  put(112, slope);
  put(116, inter);
  std::memcpy(h + 344, "n+1\0", 4);
  std::ofstream os(p, std::ios::binary);
  os.write(h, sizeof h);
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 2));
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("nifti float round trip is bit exact, plain and gzipped") {
  TempDir d("nifti");
  Volume v{Grid3<float>({5, 7, 3}), {0.9, 1.1, 8.0}};
  for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels.values()[i] = float(i) / 7.0f - 2.0f;
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    write_nifti(d.path / name, v);
    const Volume r = read_nifti(d.path / name);
    CHECK(r.voxels == v.voxels);
    CHECK(r.spacing.row_mm == doctest::Approx(0.9));
    CHECK(r.spacing.col_mm == doctest::Approx(1.1));
    CHECK(r.spacing.slice_mm == doctest::Approx(8.0));
  }
}

TEST_CASE("nifti reader applies scaling to integer voxels and maps axes") {
  TempDir d("nifti16");
  // x runs fastest: voxel (x, y, z) at x + 3 * (y + 2 * z)
  std::vector<std::int16_t> raw(3 * 2 * 2);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::int16_t(i * 10);
  write_int16_nifti(d.path / "i.nii", 3, 2, 2, raw, 0.5f, 1.0f);
  const Volume v = read_nifti(d.path / "i.nii");
  CHECK(v.shape() == Shape3{2, 3, 2});  // rows = y, cols = x
  CHECK(v.voxels(1, 2, 1) == doctest::Approx(0.5 * raw[2 + 3 * (1 + 2 * 1)] + 1.0));
  CHECK(v.spacing.col_mm == doctest::Approx(0.8));
  CHECK(v.spacing.row_mm == doctest::Approx(0.9));
}

TEST_CASE("nifti errors") {
  TempDir d("niftibad");
  CHECK_THROWS(read_nifti(d.path / "missing.nii"));
  std::ofstream(d.path / "junk.nii") << "not a nifti file at all";
  CHECK_THROWS(read_nifti(d.path / "junk.nii"));
}

TEST_CASE("dataset save and load keep images, labels and remap") {
  TempDir d("dataset");
  SyntheticCenterSpec s;
  s.center_id = "Q";
  s.image_size = 32;
  const auto cases = generate_cohort({s}, 3, 1).at("Q");
  const DatasetManifest m = save_dataset(cases, "Q", d.path / "Q");
  const auto loaded = load_dataset(DatasetManifest::load(d.path / "Q" / "manifest.json"));
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].case_id == cases[i].case_id);
    CHECK(loaded[i].center_id() == "Q");
    CHECK(loaded[i].image.voxels == cases[i].image.voxels);
    CHECK(*loaded[i].labels == *cases[i].labels);
  }
  CHECK(validate_dataset(loaded).empty());

  // a manifest with a remap: source code 2 becomes 1
  DatasetManifest remapped = DatasetManifest::load(d.path / "Q" / "manifest.json");
  remapped.label_remap = {{0, 0}, {1, 2}, {2, 1}};
  const auto swapped = load_dataset(remapped);
  for (std::size_t i = 0; i < cases[0].labels->size(); ++i) {
    const int a = cases[0].labels->values()[i], b = swapped[0].labels->values()[i];
    CHECK(b == (a == 0 ? 0 : 3 - a));
  }
}

TEST_CASE("splits: counts, determinism and csv round trip") {
  SplitSpec spec;
  spec.test_count = 15;
  const auto c = split_counts(45, spec);
  CHECK(c.test == 15);
  CHECK(c.val == 6);
  CHECK(c.train == 24);
  spec.test_count = 45;
  CHECK_THROWS_AS(split_counts(45, spec), ConfigError);

  SyntheticCenterSpec s;
  s.center_id = "S";
  s.image_size = 16;
  auto cases = generate_cohort({s}, 20, 2).at("S");
  SplitSpec sp;
  sp.test_count = 5;
  sp.seed = 11;
  const auto a = assign_splits(cases, sp), b = assign_splits(cases, sp);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].split == b[i].split);
  CHECK(select_split(a, Split::test).size() == 5);
  CHECK(select_split(a, Split::val).size() == 3);
  CHECK(select_split(a, Split::train).size() == 12);

  TempDir d("splits");
  write_splits_csv(d.path / "splits.csv", a);
  const auto read = read_splits_csv(d.path / "splits.csv");
  for (const auto& x : a) CHECK(read.at(x.case_id) == x.split);
}

TEST_CASE("bundle round trip restores weights, flags and provenance") {
  TempDir d("bundle");
  NetworkConfig cfg;
  cfg.desk_scale = true;
  ModelBundle b = build_network(cfg, 5);
  b.net.set_trainable(NetPart::encoder, 2);
  b.provenance = {"", {"A", "B"}, 12, 5, "", "unit"};
  b.provenance.bundle_id = b.weights_digest();
  save_bundle(b, d.path / "m.mcsw");
  ModelBundle r = load_bundle(d.path / "m.mcsw");
  CHECK(r.config() == b.config());
  CHECK(r.provenance == b.provenance);
  CHECK(r.weights_digest() == b.weights_digest());
  CHECK(r.net.trainable_flags() == b.net.trainable_flags());
  CHECK(build_network(cfg, 5).weights_digest() == build_network(cfg, 5).weights_digest());
  CHECK(build_network(cfg, 5).weights_digest() != build_network(cfg, 6).weights_digest());
}

TEST_CASE("corrupted or truncated archives are rejected") {
  TempDir d("bundlebad");
  NetworkConfig cfg;
  cfg.desk_scale = true;
  ModelBundle b = build_network(cfg, 1);
  save_bundle(b, d.path / "m.mcsw");
  std::string bytes;
  {
    std::ifstream is(d.path / "m.mcsw", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream(d.path / name, std::ios::binary) << data;
    return d.path / name;
  };
  std::string flipped = bytes;
  flipped[flipped.size() - 5] ^= 0x40;
  CHECK_THROWS_AS(load_bundle(write("flip.mcsw", flipped)), ArchiveError);
  CHECK_THROWS_AS(load_bundle(write("short.mcsw", bytes.substr(0, bytes.size() - 100))), ArchiveError);
  CHECK_THROWS_AS(load_bundle(write("magic.mcsw", "XXXXXXXX" + bytes.substr(8))), ArchiveError);
  CHECK_THROWS_AS(load_bundle(write("tail.mcsw", bytes + "!")), ArchiveError);
  CHECK_THROWS_AS(load_bundle(d.path / "none.mcsw"), ArchiveError);
}

TEST_CASE("loading against a different config names the mismatched blocks") {
  TempDir d("bundlecompat");
  NetworkConfig cfg;
  cfg.desk_scale = true;
  ModelBundle b = build_network(cfg, 1);
  save_bundle(b, d.path / "m.mcsw");
  NetworkConfig other;
  other.levels = 4;
  other.base_features = 4;
  other.deep_supervision_heads = 2;
  try {
    load_bundle(d.path / "m.mcsw", &other);
    FAIL("expected CompatibilityError");
  } catch (const CompatibilityError& e) {
    CHECK(std::string(e.what()).find("enc1") != std::string::npos);
  }
  const NetworkConfig same = cfg.resolved();
  CHECK_NOTHROW(load_bundle(d.path / "m.mcsw", &same));
}

TEST_CASE("a bundle cannot be its own parent") {
  TempDir d("bundlecycle");
  NetworkConfig cfg;
  cfg.desk_scale = true;
  ModelBundle b = build_network(cfg, 1);
  b.provenance.bundle_id = b.provenance.parent_id = "abc";
  CHECK_THROWS_AS(save_bundle(b, d.path / "m.mcsw"), ArchiveError);
}

TEST_CASE("remapped five-class manifest of 100 cases") {
  TempDir d("emidec");
  DatasetManifest m;
  m.center_id = "EMIDEC";
  m.label_remap = {{0, 0}, {1, 1}, {2, 2}, {3, 2}, {4, 2}};
  const Shape3 sh{8, 8, 2};
  for (int i = 0; i < 100; ++i) {
    Volume img{Grid3<float>(sh, float(i)), {1.0, 1.0, 8.0}};
    LabelMap lab(sh, 0);
    for (std::size_t k = 0; k < lab.size(); ++k) lab.values()[k] = std::uint8_t((k + i) % 5);
    const std::string id = "case" + std::to_string(i);
    write_nifti(d.path / (id + ".nii.gz"), img);
    write_nifti_labels(d.path / (id + "_gt.nii.gz"), lab, img.spacing);
    m.cases.push_back({id, id + ".nii.gz", id + "_gt.nii.gz"});
  }
  m.save(d.path / "manifest.json");
  const auto cases = load_dataset(DatasetManifest::load(d.path / "manifest.json"));
  REQUIRE(cases.size() == 100);
  for (const auto& c : cases) {
    CHECK(c.center_id() == "EMIDEC");
    CHECK(*std::max_element(c.labels->values().begin(), c.labels->values().end()) == 2);
  }
  CHECK(validate_dataset(cases).empty());
}

TEST_CASE("empty manifests and mismatched rows") {
  TempDir d("manifests");
  DatasetManifest empty;
  empty.center_id = "E";
  empty.save(d.path / "empty.json");
  CHECK(load_dataset(DatasetManifest::load(d.path / "empty.json")).empty());

  write_nifti(d.path / "img.nii", Volume{Grid3<float>({10, 10, 4}), {}});
  write_nifti_labels(d.path / "lab.nii", LabelMap({10, 10, 3}, 0), {});
  DatasetManifest bad;
  bad.center_id = "E";
  bad.cases.push_back({"x", "img.nii", "lab.nii"});
  bad.save(d.path / "bad.json");
  CHECK_THROWS_WITH_AS(load_dataset(DatasetManifest::load(d.path / "bad.json")), doctest::Contains("shape mismatch"),
                       DataError);
}

TEST_CASE("split counts of the reference cohorts") {
  SplitSpec spec;
  spec.test_count = 15;
  const auto emidec = split_counts(100, spec);
  CHECK(emidec.train == 68);
  CHECK(emidec.val == 17);
  CHECK(emidec.test == 15);
  const auto stpau = split_counts(30, spec);
  CHECK(stpau.train == 12);
  CHECK(stpau.val == 3);
  CHECK(stpau.test == 15);
}

TEST_CASE("an externally pretrained bundle loads as a parent") {
  TempDir d("external");
  NetworkConfig cfg;
  cfg.desk_scale = true;
  ModelBundle cine = build_network(cfg, 350);
  cine.provenance.training_centers = {"cine-MRI"};
  cine.provenance.note = "external parent: pretrained on 350 cine-MRI cases";
  cine.provenance.bundle_id = cine.weights_digest();
  save_bundle(cine, d.path / "cine.mcsw");
  const NetworkConfig expected = cfg.resolved();
  const ModelBundle loaded = load_bundle(d.path / "cine.mcsw", &expected);
  CHECK(loaded.provenance.note.find("external") != std::string::npos);
  CHECK(loaded.provenance.parent_id.empty());

  NetworkConfig six;
  six.levels = 6;
  six.base_features = 8;
  CHECK_THROWS_AS(load_bundle(d.path / "cine.mcsw", &six), CompatibilityError);
}

}
