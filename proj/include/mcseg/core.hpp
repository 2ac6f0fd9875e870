#ifndef MCSEG_CORE_HPP
#define MCSEG_CORE_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcseg {

// Class codes used everywhere in the project.
enum class LabelCode : std::uint8_t { background = 0, pool = 1, myocardium = 2 };
inline constexpr int num_classes = 3;

template <typename Scalar>
using Slice = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LabelSlice = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape3 {
  int rows = 1;
  int cols = 1;
  int slices = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(rows) * cols * slices;
  }
  std::size_t plane() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

// Physical voxel size in mm: (in-plane row, in-plane col, slice thickness).
struct Spacing {
  double row_mm = 1.0;
  double col_mm = 1.0;
  double slice_mm = 1.0;
  bool operator==(const Spacing&) const = default;
};

// Dense 3D array laid out slice-major: element (r, c, s) lives at
// s * rows * cols + r * cols + c, so each short-axis slice is contiguous.
template <typename T>
class Grid3 {
 public:
  using value_type = T;
  using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<Plane>;
  using ConstPlaneMap = Eigen::Map<const Plane>;

  Grid3() = default;
  explicit Grid3(Shape3 shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}

  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(int r, int c, int s) { return data_[index(r, c, s)]; }
  const T& operator()(int r, int c, int s) const { return data_[index(r, c, s)]; }
  std::size_t index(int r, int c, int s) const {
    return static_cast<std::size_t>(s) * shape_.plane() +
           static_cast<std::size_t>(r) * shape_.cols + c;
  }

  PlaneMap slice(int s) {
    return PlaneMap(data_.data() + s * shape_.plane(), shape_.rows, shape_.cols);
  }
  ConstPlaneMap slice(int s) const {
    return ConstPlaneMap(data_.data() + s * shape_.plane(), shape_.rows, shape_.cols);
  }
  void set_slice(int s, const Plane& p) { slice(s) = p; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid3&) const = default;

 private:
  Shape3 shape_{};
  std::vector<T> data_;
};

template <typename Scalar>
struct BasicVolume {
  Grid3<Scalar> voxels;
  Spacing spacing;

  const Shape3& shape() const { return voxels.shape(); }
};

using Volume = BasicVolume<float>;
using LabelMap = Grid3<std::uint8_t>;

struct CenterProfile {
  std::string center_id;
  std::string country;
  std::string scanner;
  std::optional<double> imaging_time_minutes;
  std::array<double, 2> typical_in_plane_mm{1.0, 1.0};
  std::array<double, 2> typical_thickness_mm{1.0, 1.0};
};

class CenterRegistry {
 public:
  // Throws std::invalid_argument on a duplicate center_id or bad ranges.
  void add(CenterProfile profile);
  const CenterProfile& at(const std::string& center_id) const;
  std::shared_ptr<const CenterProfile> get(const std::string& center_id) const;
  bool contains(const std::string& center_id) const;
  std::vector<std::string> ids() const;

  // Approximate Table-style metadata of the four reference centers.
  static CenterRegistry reference_centers();

 private:
  std::map<std::string, std::shared_ptr<const CenterProfile>> centers_;
};

enum class Split { unassigned, train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct CaseRecord {
  std::string case_id;
  std::shared_ptr<const CenterProfile> center;
  Volume image;
  std::optional<LabelMap> labels;
  Split split = Split::unassigned;

  const std::string& center_id() const;
};

struct Violation {
  std::string invariant;
  std::string detail;
};

// Reports every violated invariant; never throws on content.
std::vector<Violation> validate_case(const CaseRecord& c);
// Checks case_id uniqueness on top of validate_case for each member.
std::vector<Violation> validate_dataset(const std::vector<CaseRecord>& cases);

struct SplitSpec {
  double train_fraction = 0.8;
  double val_fraction = 0.2;
  int test_count = 15;
  std::uint64_t seed = 0;

  void validate() const;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for configuration or parameter contract violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcseg

#endif  // MCSEG_CORE_HPP
