#include "mcseg/config.hpp"

#include <doctest.h>

using namespace mcseg;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "seed": 3,
    "synthetic": {"cases_per_center": 10,
                  "centers": [{"center_id": "A"}, {"center_id": "B", "gamma_bias": 1.3}]},
    "network": {"desk_scale": true},
    "augmentation": {"crop_size": [64, 64]},
    "training": {"epochs": 2},
    "plan": {"train_centers": ["A"]}
  })");
}

std::string error_path(const json& j) {
  try {
    experiment_from_json(j);
  } catch (const ConfigPathError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("a minimal config parses and spreads the seed") {
  const auto c = experiment_from_json(minimal());
  CHECK(c.seed == 3);
  CHECK(c.training.seed == 3);
  CHECK(c.augmentation.seed == 3);
  CHECK(c.splits.seed == 3);
  CHECK(c.training.epochs == 2);
  CHECK(c.network.resolved().levels == 4);
  REQUIRE(c.synthetic);
  CHECK(c.synthetic->centers.size() == 2);
  CHECK(c.synthetic->centers[1].gamma_bias == 1.3);
}

TEST_CASE("unknown keys and wrong types are reported with their path") {
  auto j = minimal();
  j["training"]["epochz"] = 3;
  CHECK(error_path(j) == "$.training.epochz");
  j = minimal();
  j["training"]["epochs"] = "many";
  CHECK(error_path(j) == "$.training.epochs");
  j = minimal();
  j["training"]["epochs"] = 0;
  CHECK(error_path(j) == "$.training.epochs");
  j = minimal();
  j["synthetic"]["centers"][1]["gamma_bias"] = -1;
  CHECK(error_path(j) == "$.synthetic.centers[1]");
  j = minimal();
  j["bogus"] = 1;
  CHECK(error_path(j) == "$.bogus");
  j = minimal();
  j["plan"]["train_centers"] = {"Z"};
  CHECK(error_path(j).starts_with("$.plan.train_centers"));
  j = minimal();
  j["augmentation"]["crop_size"] = {60, 60};
  CHECK(error_path(j) == "$.augmentation.crop_size");
  j = minimal();
  j["harmonization"] = "magic";
  CHECK(error_path(j) == "$.harmonization");
  j = minimal();
  j["transfer"] = {{"k_blocks", 0}};
  CHECK(error_path(j) == "$.transfer.k_blocks");
}

TEST_CASE("dotted overrides create, replace and type values") {
  auto j = minimal();
  apply_override(j, "training.epochs", "7");
  apply_override(j, "training.learning_rate", "0.5");
  apply_override(j, "harmonization", "histogram_match");
  apply_override(j, "plan.seeds", "[1, 2, 3]");
  apply_override(j, "transfer.part", "decoder");
  apply_override(j, "transfer.k_blocks", "3");
  const auto c = experiment_from_json(j);
  CHECK(c.training.epochs == 7);
  CHECK(c.training.learning_rate == 0.5);
  CHECK(c.harmonization == Harmonization::histogram_match);
  CHECK(c.plan.seeds == std::vector<std::uint64_t>{1, 2, 3});
  REQUIRE(c.transfer);
  CHECK(c.transfer->part == NetPart::decoder);
  CHECK_THROWS_AS(apply_override(j, "training.epochs.x", "1"), ConfigPathError);
  CHECK_THROWS_AS(apply_override(j, "training..epochs", "1"), ConfigPathError);
}

TEST_CASE("serialization round trips and the hash tracks content") {
  const auto c = experiment_from_json(minimal());
  const json dumped = to_json(c);
  const auto again = experiment_from_json(dumped);
  CHECK(to_json(again) == dumped);
  CHECK(config_hash(dumped) == config_hash(to_json(again)));
  CHECK(config_hash(dumped).size() == 16);
  auto j = minimal();
  apply_override(j, "training.epochs", "3");
  CHECK(config_hash(to_json(experiment_from_json(j))) != config_hash(dumped));
  // reference FNV-1a 64 values
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("harmonization names") {
  for (auto h : {Harmonization::none, Harmonization::histogram_match, Harmonization::cycle_translate})
    CHECK(harmonization_from_string(to_string(h)) == h);
  CHECK_THROWS(harmonization_from_string("cyclegan"));
}

}
