#include "mcseg/config.hpp"

#include "mcseg/bundle.hpp"
#include "mcseg/random.hpp"

#include <fstream>
#include <set>
#include <type_traits>

namespace mcseg {

using nlohmann::json;

std::string to_string(Harmonization h) {
  switch (h) {
    case Harmonization::none: return "none";
    case Harmonization::histogram_match: return "histogram_match";
    case Harmonization::cycle_translate: return "cycle_translate";
  }
  return "none";
}

Harmonization harmonization_from_string(const std::string& s) {
  if (s == "none") return Harmonization::none;
  if (s == "histogram_match") return Harmonization::histogram_match;
  if (s == "cycle_translate") return Harmonization::cycle_translate;
  throw ConfigError("harmonization must be one of none, histogram_match, cycle_translate; got '" + s + "'");
}

std::string fnv1a_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(s)));
  return buf;
}

std::string config_hash(const json& j) { return fnv1a_hex(j.dump()); }

namespace {

// Reads one JSON object, rejecting unknown keys and values of the wrong type.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigPathError(path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string at(const char* key) const { return path_ + "." + key; }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    out = convert<T>(j_.at(key), at(key));
  }

  template <typename T>
  void require(const char* key, T& out) {
    if (!j_.contains(key)) throw ConfigPathError(at(key), "required field missing");
    get(key, out);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigPathError(path_ + "." + k, "unknown field");
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigPathError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigPathError(path, "expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
        throw ConfigPathError(path, "expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigPathError(path, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigPathError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      if (!v.is_string()) throw ConfigPathError(path, "expected a path string");
      return std::filesystem::path(v.get<std::string>());
    } else if constexpr (std::is_same_v<T, Range> || std::is_same_v<T, std::array<int, 2>>) {
      if (!v.is_array() || v.size() != 2) throw ConfigPathError(path, "expected a [min, max] pair");
      T out{};
      for (std::size_t i = 0; i < 2; ++i)
        out[i] = convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]");
      return out;
    } else {
      // std::vector<E>
      if (!v.is_array()) throw ConfigPathError(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Runs a module's own validate() and pins its message to a JSON location.
template <typename F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigPathError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigPathError(path, e.what());
  }
}

json tissue_json(const TissueStats& t) { return {{"mean", t.mean}, {"std", t.std}}; }

TissueStats tissue_from(const json& j, const std::string& path, TissueStats t) {
  Reader r(j, path);
  r.get("mean", t.mean);
  r.get("std", t.std);
  r.finish();
  return t;
}

}  // namespace

json to_json(const AugmentationConfig& c) {
  return {{"enable_spatial", c.enable_spatial},
          {"enable_intensity", c.enable_intensity},
          {"per_op_probability", c.per_op_probability},
          {"rotation_limit_deg", c.rotation_limit_deg},
          {"rescale_mm_range", c.rescale_mm_range},
          {"noise_sigma_range", c.noise_sigma_range},
          {"gamma_range", c.gamma_range},
          {"brightness_range", c.brightness_range},
          {"contrast_range", c.contrast_range},
          {"bilateral_spatial_sigma_range", c.bilateral_spatial_sigma_range},
          {"bilateral_range_sigma_range", c.bilateral_range_sigma_range},
          {"crop_size", c.crop_size},
          {"crop_shift_fraction", c.crop_shift_fraction},
          {"seed", c.seed}};
}

json to_json(const TrainingConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"workers", c.workers}};
}

json to_json(const TransferConfig& c) {
  return {{"parent", c.parent.string()},
          {"part", to_string(c.part)},
          {"k_blocks", c.k_blocks},
          {"data_fraction", c.data_fraction},
          {"epochs", c.epochs}};
}

json to_json(const SplitSpec& c) {
  return {{"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"test_count", c.test_count},
          {"seed", c.seed}};
}

json to_json(const SyntheticCenterSpec& c) {
  return {{"center_id", c.center_id},
          {"background", tissue_json(c.background)},
          {"pool", tissue_json(c.pool)},
          {"myocardium", tissue_json(c.myocardium)},
          {"scar", tissue_json(c.scar)},
          {"gamma_bias", c.gamma_bias},
          {"noise_sigma", c.noise_sigma},
          {"in_plane_mm", c.in_plane_mm},
          {"thickness_mm", c.thickness_mm},
          {"slices", c.slices},
          {"scar_probability", c.scar_probability},
          {"scar_arc_deg", c.scar_arc_deg},
          {"image_size", c.image_size},
          {"pool_radius_mm", c.pool_radius_mm},
          {"wall_thickness_mm", c.wall_thickness_mm},
          {"axis_ratio", c.axis_ratio},
          {"rv_probability", c.rv_probability},
          {"center_jitter", c.center_jitter}};
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["datasets"] = json::array();
  for (const auto& d : c.datasets) j["datasets"].push_back({{"center_id", d.center_id}, {"manifest", d.manifest.string()}});
  if (c.synthetic) {
    json s{{"cases_per_center", c.synthetic->cases_per_center}};
    if (!c.synthetic->spec_file.empty()) s["spec_file"] = c.synthetic->spec_file.string();
    s["centers"] = json::array();
    for (const auto& spec : c.synthetic->centers) s["centers"].push_back(to_json(spec));
    j["synthetic"] = s;
  }
  j["augmentation"] = to_json(c.augmentation);
  j["harmonization"] = to_string(c.harmonization);
  if (c.transfer) j["transfer"] = to_json(*c.transfer);
  if (c.multicenter_mix) {
    j["multicenter_mix"] = json::array();
    for (const auto& m : *c.multicenter_mix)
      j["multicenter_mix"].push_back({{"center_id", m.center_id}, {"train", m.train}, {"val", m.val}});
  }
  j["network"] = to_json(c.network);
  j["training"] = to_json(c.training);
  j["splits"] = to_json(c.splits);
  const auto& t = c.translator;
  j["translator"] = {{"epochs", t.epochs},
                     {"residual_blocks", t.residual_blocks},
                     {"base_features", t.base_features},
                     {"cycle_weight", t.cycle_weight},
                     {"identity_weight", t.identity_weight},
                     {"learning_rate", t.learning_rate},
                     {"max_slices", t.max_slices}};
  const auto& p = c.plan;
  j["plan"] = {{"train_centers", p.train_centers},
               {"test_centers", p.test_centers},
               {"seeds", p.seeds},
               {"augmentation_settings", p.augmentation_settings},
               {"fractions", p.fractions},
               {"block_sweep", p.block_sweep},
               {"multicenter_with_augmentation", p.multicenter_with_augmentation}};
  return j;
}

AugmentationConfig augmentation_from_json(const json& j, const std::string& path) {
  AugmentationConfig c;
  Reader r(j, path);
  r.get("enable_spatial", c.enable_spatial);
  r.get("enable_intensity", c.enable_intensity);
  r.get("per_op_probability", c.per_op_probability);
  r.get("rotation_limit_deg", c.rotation_limit_deg);
  r.get("rescale_mm_range", c.rescale_mm_range);
  r.get("noise_sigma_range", c.noise_sigma_range);
  r.get("gamma_range", c.gamma_range);
  r.get("brightness_range", c.brightness_range);
  r.get("contrast_range", c.contrast_range);
  r.get("bilateral_spatial_sigma_range", c.bilateral_spatial_sigma_range);
  r.get("bilateral_range_sigma_range", c.bilateral_range_sigma_range);
  r.get("crop_size", c.crop_size);
  r.get("crop_shift_fraction", c.crop_shift_fraction);
  r.get("seed", c.seed);
  r.finish();
  checked(path, [&] { c.validate(); });
  return c;
}

TrainingConfig training_from_json(const json& j, const std::string& path) {
  TrainingConfig c;
  Reader r(j, path);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("learning_rate", c.learning_rate);
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  r.finish();
  if (c.epochs < 1) throw ConfigPathError(r.at("epochs"), "must be >= 1");
  if (c.batch_size < 1) throw ConfigPathError(r.at("batch_size"), "must be >= 1");
  if (!(c.learning_rate > 0)) throw ConfigPathError(r.at("learning_rate"), "must be > 0");
  if (c.workers < 1) throw ConfigPathError(r.at("workers"), "must be >= 1");
  return c;
}

TransferConfig transfer_from_json(const json& j, const std::string& path) {
  TransferConfig c;
  Reader r(j, path);
  r.get("parent", c.parent);
  std::string part = to_string(c.part);
  r.get("part", part);
  checked(r.at("part"), [&] { c.part = net_part_from_string(part); });
  r.get("k_blocks", c.k_blocks);
  r.get("data_fraction", c.data_fraction);
  r.get("epochs", c.epochs);
  r.finish();
  if (c.k_blocks < 1) throw ConfigPathError(r.at("k_blocks"), "must be >= 1 (k = 0 leaves nothing trainable)");
  if (!(c.data_fraction > 0 && c.data_fraction <= 1)) throw ConfigPathError(r.at("data_fraction"), "must be in (0, 1]");
  if (c.epochs < 1) throw ConfigPathError(r.at("epochs"), "must be >= 1");
  return c;
}

NetworkConfig network_from_json(const json& j, const std::string& path) {
  NetworkConfig c;
  Reader r(j, path);
  r.get("levels", c.levels);
  r.get("base_features", c.base_features);
  r.get("in_channels", c.in_channels);
  r.get("num_classes", c.num_classes);
  r.get("leaky_slope", c.leaky_slope);
  r.get("deep_supervision_heads", c.deep_supervision_heads);
  r.get("desk_scale", c.desk_scale);
  r.finish();
  checked(path, [&] { c.resolved().validate(); });
  return c;
}

SyntheticCenterSpec synthetic_center_from_json(const json& j, const std::string& path) {
  SyntheticCenterSpec s;
  Reader r(j, path);
  r.require("center_id", s.center_id);
  if (r.has("background")) s.background = tissue_from(r.raw("background"), r.at("background"), s.background);
  if (r.has("pool")) s.pool = tissue_from(r.raw("pool"), r.at("pool"), s.pool);
  if (r.has("myocardium")) s.myocardium = tissue_from(r.raw("myocardium"), r.at("myocardium"), s.myocardium);
  if (r.has("scar")) s.scar = tissue_from(r.raw("scar"), r.at("scar"), s.scar);
  r.get("gamma_bias", s.gamma_bias);
  r.get("noise_sigma", s.noise_sigma);
  r.get("in_plane_mm", s.in_plane_mm);
  r.get("thickness_mm", s.thickness_mm);
  r.get("slices", s.slices);
  r.get("scar_probability", s.scar_probability);
  r.get("scar_arc_deg", s.scar_arc_deg);
  r.get("image_size", s.image_size);
  r.get("pool_radius_mm", s.pool_radius_mm);
  r.get("wall_thickness_mm", s.wall_thickness_mm);
  r.get("axis_ratio", s.axis_ratio);
  r.get("rv_probability", s.rv_probability);
  r.get("center_jitter", s.center_jitter);
  r.finish();
  checked(path, [&] { s.validate(); });
  return s;
}

ExperimentConfig experiment_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  Reader r(j, "$");
  r.get("seed", c.seed);
  if (r.has("datasets")) {
    const json& ds = r.raw("datasets");
    if (!ds.is_array()) throw ConfigPathError("$.datasets", "expected an array");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::string p = "$.datasets[" + std::to_string(i) + "]";
      Reader dr(ds[i], p);
      DatasetRef d;
      dr.require("center_id", d.center_id);
      dr.require("manifest", d.manifest);
      dr.finish();
      if (d.manifest.is_relative() && !base_dir.empty()) d.manifest = base_dir / d.manifest;
      c.datasets.push_back(d);
    }
  }
  if (r.has("synthetic")) {
    Reader sr(r.raw("synthetic"), "$.synthetic");
    SyntheticSource s;
    sr.get("spec_file", s.spec_file);
    sr.get("cases_per_center", s.cases_per_center);
    if (sr.has("centers")) {
      const json& cs = sr.raw("centers");
      if (!cs.is_array()) throw ConfigPathError("$.synthetic.centers", "expected an array");
      for (std::size_t i = 0; i < cs.size(); ++i)
        s.centers.push_back(synthetic_center_from_json(cs[i], "$.synthetic.centers[" + std::to_string(i) + "]"));
    }
    sr.finish();
    if (!s.spec_file.empty() && s.spec_file.is_relative() && !base_dir.empty()) s.spec_file = base_dir / s.spec_file;
    if (s.cases_per_center < 1) throw ConfigPathError("$.synthetic.cases_per_center", "must be >= 1");
    if (s.spec_file.empty() && s.centers.empty())
      throw ConfigPathError("$.synthetic", "needs either spec_file or centers");
    c.synthetic = s;
  }
  if (r.has("augmentation")) c.augmentation = augmentation_from_json(r.raw("augmentation"));
  std::string h = "none";
  r.get("harmonization", h);
  checked("$.harmonization", [&] { c.harmonization = harmonization_from_string(h); });
  if (r.has("transfer")) {
    c.transfer = transfer_from_json(r.raw("transfer"));
    if (!c.transfer->parent.empty() && c.transfer->parent.is_relative() && !base_dir.empty())
      c.transfer->parent = base_dir / c.transfer->parent;
  }
  if (r.has("multicenter_mix")) {
    const json& ms = r.raw("multicenter_mix");
    if (!ms.is_array()) throw ConfigPathError("$.multicenter_mix", "expected an array");
    std::vector<CenterCount> mix;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const std::string p = "$.multicenter_mix[" + std::to_string(i) + "]";
      Reader mr(ms[i], p);
      CenterCount cc;
      mr.require("center_id", cc.center_id);
      mr.require("train", cc.train);
      mr.get("val", cc.val);
      mr.finish();
      if (cc.train < 0 || cc.val < 0) throw ConfigPathError(p, "counts must be >= 0");
      mix.push_back(cc);
    }
    c.multicenter_mix = mix;
  }
  if (r.has("network")) c.network = network_from_json(r.raw("network"));
  if (r.has("training")) c.training = training_from_json(r.raw("training"));
  if (r.has("splits")) {
    Reader sr(r.raw("splits"), "$.splits");
    sr.get("train_fraction", c.splits.train_fraction);
    sr.get("val_fraction", c.splits.val_fraction);
    sr.get("test_count", c.splits.test_count);
    sr.get("seed", c.splits.seed);
    sr.finish();
    checked("$.splits", [&] { c.splits.validate(); });
  }
  if (r.has("translator")) {
    Reader tr(r.raw("translator"), "$.translator");
    auto& t = c.translator;
    tr.get("epochs", t.epochs);
    tr.get("residual_blocks", t.residual_blocks);
    tr.get("base_features", t.base_features);
    tr.get("cycle_weight", t.cycle_weight);
    tr.get("identity_weight", t.identity_weight);
    tr.get("learning_rate", t.learning_rate);
    tr.get("max_slices", t.max_slices);
    tr.finish();
    if (t.epochs < 1) throw ConfigPathError("$.translator.epochs", "must be >= 1");
    if (t.residual_blocks < 0) throw ConfigPathError("$.translator.residual_blocks", "must be >= 0");
    if (t.base_features < 1) throw ConfigPathError("$.translator.base_features", "must be >= 1");
    if (!(t.learning_rate > 0)) throw ConfigPathError("$.translator.learning_rate", "must be > 0");
    if (t.cycle_weight < 0 || t.identity_weight < 0) throw ConfigPathError("$.translator", "loss weights must be >= 0");
  }
  if (r.has("plan")) {
    Reader pr(r.raw("plan"), "$.plan");
    auto& p = c.plan;
    pr.get("train_centers", p.train_centers);
    pr.get("test_centers", p.test_centers);
    pr.get("seeds", p.seeds);
    pr.get("augmentation_settings", p.augmentation_settings);
    pr.get("fractions", p.fractions);
    pr.get("block_sweep", p.block_sweep);
    pr.get("multicenter_with_augmentation", p.multicenter_with_augmentation);
    pr.finish();
    if (p.seeds.empty()) throw ConfigPathError("$.plan.seeds", "needs at least one seed");
    for (std::size_t i = 0; i < p.augmentation_settings.size(); ++i) {
      const auto& s = p.augmentation_settings[i];
      if (s != "none" && s != "spatial" && s != "intensity" && s != "spatial_intensity")
        throw ConfigPathError("$.plan.augmentation_settings[" + std::to_string(i) + "]",
                              "must be none, spatial, intensity or spatial_intensity");
    }
    for (std::size_t i = 0; i < p.fractions.size(); ++i)
      if (!(p.fractions[i] > 0 && p.fractions[i] <= 1))
        throw ConfigPathError("$.plan.fractions[" + std::to_string(i) + "]", "must be in (0, 1]");
  }
  r.finish();
  if (r.has("seed")) c.propagate_seed();
  c.validate();
  return c;
}

void ExperimentConfig::propagate_seed() {
  training.seed = seed;
  augmentation.seed = seed;
  splits.seed = seed;
}

void ExperimentConfig::validate() const {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < datasets.size(); ++i)
    if (!ids.insert(datasets[i].center_id).second)
      throw ConfigPathError("$.datasets[" + std::to_string(i) + "].center_id", "duplicate center " + datasets[i].center_id);
  if (synthetic)
    for (const auto& s : synthetic->centers)
      if (!ids.insert(s.center_id).second)
        throw ConfigPathError("$.synthetic.centers", "duplicate center " + s.center_id);
  // centers from a spec file are only known after loading, so references are checked then
  const bool known = !(synthetic && !synthetic->spec_file.empty());
  auto check_ref = [&](const std::string& id, const std::string& path) {
    if (known && !ids.count(id)) throw ConfigPathError(path, "unknown center " + id);
  };
  for (std::size_t i = 0; i < plan.train_centers.size(); ++i)
    check_ref(plan.train_centers[i], "$.plan.train_centers[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < plan.test_centers.size(); ++i)
    check_ref(plan.test_centers[i], "$.plan.test_centers[" + std::to_string(i) + "]");
  if (multicenter_mix)
    for (std::size_t i = 0; i < multicenter_mix->size(); ++i)
      check_ref((*multicenter_mix)[i].center_id, "$.multicenter_mix[" + std::to_string(i) + "].center_id");
  if (transfer) checked("$.transfer", [&] { transfer->validate(network.resolved().levels); });
  const int div = 1 << (network.resolved().levels - 1);
  if (augmentation.crop_size[0] % div || augmentation.crop_size[1] % div)
    throw ConfigPathError("$.augmentation.crop_size", "must be divisible by " + std::to_string(div));
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigPathError("$", "cannot open config file " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigPathError("$", std::string("malformed JSON in ") + path.string() + ": " + e.what());
  }
}

void apply_override(json& j, const std::string& dotted_path, const std::string& value) {
  json* node = &j;
  std::size_t start = 0;
  std::string json_path = "$";
  while (true) {
    const auto dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigPathError(json_path, "empty key in override '" + dotted_path + "'");
    json_path += "." + key;
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigPathError(json_path, "parent is not an object");
      *node = json::object();
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // values are JSON when they parse as JSON, plain strings otherwise
  try {
    *node = json::parse(value);
  } catch (const json::parse_error&) {
    *node = value;
  }
}

}  // namespace mcseg
