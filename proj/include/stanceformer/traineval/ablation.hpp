#pragma once

// Three-arm target ablation: the unmodified encoder on real targets, the same
// encoder with every target hidden, and the target-aware encoder. Arms share
// every setting except the knob that defines them.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/encoder/checkpoint.hpp"
#include "stanceformer/traineval/grid_search.hpp"
#include "stanceformer/traineval/trainer.hpp"

namespace stanceformer::eval {

inline constexpr const char* kArmOriginal = "targets_original";
inline constexpr const char* kArmMasked = "targets_masked";
inline constexpr const char* kArmStanceformer = "stanceformer";

struct ArmResult {
  std::string name;
  bool targets_masked = false;
  double alpha = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_f1;  // parallel to seeds
  std::vector<Scores> reports;  // parallel to seeds
  double mean = 0.0;
  double median = 0.0;
  // Hash of the run settings with the arm knobs (alpha, masking) and the seed
  // removed; equal across arms by construction.
  std::string shared_config_hash;
};

struct AblationResult {
  std::vector<ArmResult> arms;
  std::optional<GridResult> grid;  // present when alpha was grid-searched
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::string shared_settings_hash(model::ModelConfig m, TrainConfig t, ta::TargetAwarenessConfig a) {
  m.seed = 0;
  t.seed = 0;
  a.alpha = 0.0;
  const nlohmann::json j{{"model", model::to_json(m)}, {"train", to_json(t)}, {"ta", model::to_json(a)}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline AblationResult run_ablation(const Splits& splits, const model::ModelConfig& model_template,
                                   const TrainConfig& train_template, const ta::TargetAwarenessConfig& ta_template,
                                   double alpha, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("ablation: at least one seed is required");
  const auto real = encode_splits(splits, model_template.max_len, false);
  const auto masked = encode_splits(splits, model_template.max_len, true);

  struct Arm {
    const char* name;
    bool masked;
    double alpha;
  };
  AblationResult result;
  for (const Arm& arm : {Arm{kArmOriginal, false, 0.0}, Arm{kArmMasked, true, 0.0}, Arm{kArmStanceformer, false, alpha}}) {
    ArmResult r;
    r.name = arm.name;
    r.targets_masked = arm.masked;
    r.alpha = arm.alpha;
    auto ta_cfg = ta_template;
    ta_cfg.alpha = arm.alpha;
    const auto& data = arm.masked ? masked : real;
    for (auto seed : seeds) {
      auto m = model_template;
      m.vocab_size = data.vocab.size();
      m.n_labels = data.labels.size();
      m.seed = seed;
      auto t = train_template;
      t.seed = seed;
      r.shared_config_hash = shared_settings_hash(m, t, ta_cfg);
      auto trained = train(data, m, ta_cfg, t);
      auto scores = evaluate(trained.params, ta_cfg, data.test, data.labels, t.convention);
      r.seeds.push_back(seed);
      r.test_f1.push_back(scores.macro_f1);
      r.reports.push_back(std::move(scores));
    }
    r.mean = mean_of(r.test_f1);
    r.median = median_of(r.test_f1);
    result.arms.push_back(std::move(r));
  }
  return result;
}

// Alpha is searched once, on the first seed, and reused for every seed of the
// target-aware arm.
inline AblationResult run_ablation_with_grid(const Splits& splits, const model::ModelConfig& model_template,
                                             const TrainConfig& train_template,
                                             const ta::TargetAwarenessConfig& ta_template,
                                             const std::vector<double>& alphas,
                                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("ablation: at least one seed is required");
  const auto real = encode_splits(splits, model_template.max_len, false);
  auto m = model_template;
  m.vocab_size = real.vocab.size();
  m.n_labels = real.labels.size();
  m.seed = seeds.front();
  auto t = train_template;
  t.seed = seeds.front();
  auto grid = grid_search_alpha(real, m, ta_template, t, alphas);
  auto result = run_ablation(splits, model_template, train_template, ta_template, grid.chosen_alpha, seeds);
  result.grid = std::move(grid);
  return result;
}

}  // namespace stanceformer::eval
