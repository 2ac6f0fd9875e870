#include "mcseg/synthgen.hpp"

#include "mcseg/nn/tensor.hpp"
#include "mcseg/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace mcseg {

using nlohmann::json;

namespace {

void check_tissue(const std::string& id, const char* name, const TissueStats& t) {
  if (!(t.mean >= 0 && t.mean <= 1))
    throw ConfigError("center " + id + ": " + name + " mean must be in [0, 1]");
  if (!(t.std >= 0)) throw ConfigError("center " + id + ": " + name + " std must be >= 0");
}

void check_range_ordered(const std::string& id, const char* name, const Range& r, bool positive) {
  if (!(r[0] <= r[1])) throw ConfigError("center " + id + ": " + name + " min exceeds max");
  if (positive && !(r[0] > 0)) throw ConfigError("center " + id + ": " + name + " must be > 0");
}

double draw(Rng& rng, const TissueStats& t) { return t.mean + t.std * rng.normal(); }

}  // namespace

void SyntheticCenterSpec::validate() const {
  if (center_id.empty()) throw ConfigError("synthetic center needs a center_id");
  check_tissue(center_id, "background", background);
  check_tissue(center_id, "pool", pool);
  check_tissue(center_id, "myocardium", myocardium);
  check_tissue(center_id, "scar", scar);
  if (!(gamma_bias > 0)) throw ConfigError("center " + center_id + ": gamma_bias must be > 0");
  if (!(noise_sigma >= 0)) throw ConfigError("center " + center_id + ": noise_sigma must be >= 0");
  check_range_ordered(center_id, "in_plane_mm", in_plane_mm, true);
  check_range_ordered(center_id, "thickness_mm", thickness_mm, true);
  check_range_ordered(center_id, "scar_arc_deg", scar_arc_deg, false);
  check_range_ordered(center_id, "pool_radius_mm", pool_radius_mm, true);
  check_range_ordered(center_id, "wall_thickness_mm", wall_thickness_mm, true);
  check_range_ordered(center_id, "axis_ratio", axis_ratio, true);
  if (slices[0] < 1 || slices[0] > slices[1])
    throw ConfigError("center " + center_id + ": slices range invalid");
  if (!(scar_probability >= 0 && scar_probability <= 1) || !(rv_probability >= 0 && rv_probability <= 1))
    throw ConfigError("center " + center_id + ": probabilities must be in [0, 1]");
  if (image_size < 8) throw ConfigError("center " + center_id + ": image_size must be >= 8");
}

double SyntheticCenterSpec::distance(const SyntheticCenterSpec& o) const {
  return std::max({std::abs(background.mean - o.background.mean), std::abs(pool.mean - o.pool.mean),
                   std::abs(myocardium.mean - o.myocardium.mean), std::abs(scar.mean - o.scar.mean),
                   std::abs(gamma_bias - o.gamma_bias), std::abs(noise_sigma - o.noise_sigma)});
}

CenterProfile SyntheticCenterSpec::profile() const {
  CenterProfile p;
  p.center_id = center_id;
  p.country = "synthetic";
  p.scanner = "phantom";
  p.typical_in_plane_mm = in_plane_mm;
  p.typical_thickness_mm = thickness_mm;
  return p;
}

CaseRecord generate_case(const SyntheticCenterSpec& spec, std::uint64_t seed, const std::string& case_id) {
  spec.validate();
  Rng rng(seed);
  const int n = spec.image_size;
  const int slices = spec.slices[0] + static_cast<int>(rng.below(spec.slices[1] - spec.slices[0] + 1));
  const double mm = rng.uniform(spec.in_plane_mm[0], spec.in_plane_mm[1]);
  const double thick = rng.uniform(spec.thickness_mm[0], spec.thickness_mm[1]);

  const double mid = (n - 1) / 2.0;
  const double cy0 = mid + spec.center_jitter * n * rng.uniform(-1, 1);
  const double cx0 = mid + spec.center_jitter * n * rng.uniform(-1, 1);
  const double drift_y = rng.uniform(-2, 2), drift_x = rng.uniform(-2, 2);
  const double a_mm = rng.uniform(spec.pool_radius_mm[0], spec.pool_radius_mm[1]);
  const double b_mm = a_mm * rng.uniform(spec.axis_ratio[0], spec.axis_ratio[1]);
  const double wall_mm = rng.uniform(spec.wall_thickness_mm[0], spec.wall_thickness_mm[1]);
  const double phi = rng.uniform(0, std::numbers::pi);
  const double apex_scale = rng.uniform(0.55, 0.8);

  const bool has_rv = rng.bernoulli(spec.rv_probability);
  const double rv_angle = rng.uniform(0, 2 * std::numbers::pi);
  const bool has_scar = rng.bernoulli(spec.scar_probability);
  const double scar_start = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const double scar_extent = rng.uniform(spec.scar_arc_deg[0], spec.scar_arc_deg[1]) * std::numbers::pi / 180.0;
  const double transmural = rng.uniform(0.4, 1.0);

  const double body_a = 0.49 * n, body_b = 0.45 * n;
  const double cphi = std::cos(phi), sphi = std::sin(phi);

  CaseRecord c;
  c.case_id = case_id.empty() ? spec.center_id + "_" + std::to_string(seed % 100000) : case_id;
  c.center = std::make_shared<const CenterProfile>(spec.profile());
  const Shape3 shape{n, n, slices};
  c.image = Volume{Grid3<float>(shape), Spacing{mm, mm, thick}};
  c.labels.emplace(shape);

  for (int s = 0; s < slices; ++s) {
    const double t = slices > 1 ? double(s) / (slices - 1) : 0.0;
    const double scale = 1.0 - (1.0 - apex_scale) * t;
    const double A = a_mm * scale / mm, B = b_mm * scale / mm;
    const double Ao = (a_mm * scale + wall_mm) / mm, Bo = (b_mm * scale + wall_mm) / mm;
    const double cy = cy0 + drift_y * t, cx = cx0 + drift_x * t;
    // RV cavity: flattened ellipse hugging the LV on one side
    const double ro = 0.5 * (Ao + Bo);
    const double rv_ra = 1.2 * ro, rv_rb = 0.6 * ro;
    const double rvy = cy + (ro + 0.4 * rv_rb) * std::sin(rv_angle);
    const double rvx = cx + (ro + 0.4 * rv_rb) * std::cos(rv_angle);

    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double u = cphi * dx + sphi * dy, v = -sphi * dx + cphi * dy;
        const double rin = std::sqrt((u / A) * (u / A) + (v / B) * (v / B));
        const double rout = std::sqrt((u / Ao) * (u / Ao) + (v / Bo) * (v / Bo));
        std::uint8_t label = 0;
        double value;
        if (rin <= 1.0) {
          label = 1;
          value = draw(rng, spec.pool);
        } else if (rout <= 1.0) {
          label = 2;
          bool scarred = false;
          if (has_scar) {
            double ang = std::atan2(v, u) - scar_start;
            while (ang < 0) ang += 2 * std::numbers::pi;
            const double depth = (rin - 1.0) / ((rin - 1.0) + (1.0 - rout) + 1e-12);
            scarred = ang <= scar_extent && depth <= transmural;
          }
          value = draw(rng, scarred ? spec.scar : spec.myocardium);
        } else {
          const double ry = y - rvy, rx = x - rvx;
          const double tang = -std::sin(rv_angle) * rx + std::cos(rv_angle) * ry;
          const double rad = std::cos(rv_angle) * rx + std::sin(rv_angle) * ry;
          const bool in_rv = has_rv && (tang / rv_ra) * (tang / rv_ra) + (rad / rv_rb) * (rad / rv_rb) <= 1.0;
          const double by = (y - mid) / body_b, bx = (x - mid) / body_a;
          if (in_rv)
            value = draw(rng, spec.pool);
          else if (by * by + bx * bx <= 1.0)
            value = draw(rng, spec.background);
          else
            value = 0.1 * spec.background.mean + 0.01 * rng.normal();
        }
        value = std::pow(std::clamp(value, 0.0, 1.0), spec.gamma_bias);
        value = std::clamp(value + spec.noise_sigma * rng.normal(), 0.0, 1.0);
        c.image.voxels(y, x, s) = static_cast<float>(value);
        (*c.labels)(y, x, s) = label;
      }
    }
  }
  return c;
}

std::map<std::string, std::vector<CaseRecord>> generate_cohort(const std::vector<SyntheticCenterSpec>& specs,
                                                              int cases_per_center, std::uint64_t seed,
                                                              double min_distance) {
  std::set<std::string> ids;
  for (const auto& s : specs) {
    s.validate();
    if (!ids.insert(s.center_id).second) throw ConfigError("duplicate synthetic center " + s.center_id);
  }
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      if (specs[i].distance(specs[j]) < min_distance)
        throw ConfigError("indistinct synthetic centers " + specs[i].center_id + " and " +
                          specs[j].center_id + ": no statistic differs by " + std::to_string(min_distance));
  std::map<std::string, std::vector<CaseRecord>> out;
  for (const auto& spec : specs) {
    auto profile = std::make_shared<const CenterProfile>(spec.profile());
    auto& list = out[spec.center_id];
    const std::uint64_t center_seed = nn::mix_seed(seed, hash_string(spec.center_id));
    for (int i = 0; i < cases_per_center; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", spec.center_id.c_str(), i);
      CaseRecord c = generate_case(spec, nn::mix_seed(center_seed, std::uint64_t(i)), id);
      c.center = profile;
      list.push_back(std::move(c));
    }
  }
  return out;
}

namespace {

TissueStats tissue_from(const json& j, const TissueStats& d) {
  TissueStats t = d;
  if (j.contains("mean")) t.mean = j["mean"].get<double>();
  if (j.contains("std")) t.std = j["std"].get<double>();
  return t;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

SyntheticCohortFile SyntheticCohortFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("missing spec file: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed spec file " + path.string() + ": " + e.what());
  }
  SyntheticCohortFile f;
  int image_size = -1;
  try {
    maybe(j, "image_size", image_size);
    maybe(j, "cases_per_center", f.cases_per_center);
    maybe(j, "seed", f.seed);
    for (const auto& cj : j.at("centers")) {
      SyntheticCenterSpec s;
      if (image_size > 0) s.image_size = image_size;
      s.center_id = cj.at("center_id").get<std::string>();
      if (cj.contains("background")) s.background = tissue_from(cj["background"], s.background);
      if (cj.contains("pool")) s.pool = tissue_from(cj["pool"], s.pool);
      if (cj.contains("myocardium")) s.myocardium = tissue_from(cj["myocardium"], s.myocardium);
      if (cj.contains("scar")) s.scar = tissue_from(cj["scar"], s.scar);
      maybe(cj, "gamma_bias", s.gamma_bias);
      maybe(cj, "noise_sigma", s.noise_sigma);
      maybe(cj, "in_plane_mm", s.in_plane_mm);
      maybe(cj, "thickness_mm", s.thickness_mm);
      maybe(cj, "slices", s.slices);
      maybe(cj, "scar_probability", s.scar_probability);
      maybe(cj, "scar_arc_deg", s.scar_arc_deg);
      maybe(cj, "image_size", s.image_size);
      maybe(cj, "pool_radius_mm", s.pool_radius_mm);
      maybe(cj, "wall_thickness_mm", s.wall_thickness_mm);
      maybe(cj, "axis_ratio", s.axis_ratio);
      maybe(cj, "rv_probability", s.rv_probability);
      maybe(cj, "center_jitter", s.center_jitter);
      s.validate();
      f.centers.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed spec file " + path.string() + ": " + e.what());
  }
  return f;
}

}  // namespace mcseg
