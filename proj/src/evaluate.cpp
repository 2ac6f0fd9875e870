#include "mcseg/evalkit.hpp"

#include "mcseg/inference.hpp"
#include "mcseg/preprocess.hpp"

#include <cmath>
#include <fstream>

namespace mcseg {

void EvaluationResult::save_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << "case_id,center_id,dice_pool,dice_myo,dice_mean\n";
  char buf[128];
  for (const auto& c : cases) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f\n", c.dice.pool_dice(), c.dice.myocardium_dice(), c.dice.mean());
    os << c.case_id << "," << c.center_id << buf;
  }
  std::snprintf(buf, sizeof buf, "aggregate,,,,%.6f\n", mean);
  os << buf;
}

EvaluationResult evaluate_with(const Predictor& predict, const std::vector<CaseRecord>& cases, int rows,
                               int cols, bool postprocess) {
  EvaluationResult r;
  for (const auto& raw : cases) {
    if (!raw.labels) {
      r.skipped.push_back(raw.case_id);
      continue;
    }
    const CaseRecord c = preprocess_case(raw, rows, cols);
    LabelMap pred = predict(c);
    bool empty = false;
    if (postprocess) {
      auto comp = largest_component(pred);
      empty = comp.empty_warning;
      pred = std::move(comp.labels);
    }
    r.cases.push_back({c.case_id, c.center_id(), dice_3d(pred, *c.labels), empty});
  }
  if (!r.cases.empty()) {
    for (const auto& c : r.cases) r.mean += c.dice.mean();
    r.mean /= double(r.cases.size());
    double ss = 0;
    for (const auto& c : r.cases) ss += (c.dice.mean() - r.mean) * (c.dice.mean() - r.mean);
    r.std = std::sqrt(ss / double(r.cases.size()));
  }
  return r;
}

EvaluationResult evaluate(ModelBundle& bundle, const std::vector<CaseRecord>& cases, int rows, int cols,
                          const Harmonizer& harmonizer, int batch) {
  return evaluate_with(
      [&](const CaseRecord& c) {
        if (harmonizer) return predict_volume(bundle.net, harmonizer(c.image), batch).labels;
        return predict_volume(bundle.net, c.image, batch).labels;
      },
      cases, rows, cols);
}

}  // namespace mcseg
