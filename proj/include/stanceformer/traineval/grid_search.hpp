#pragma once

// Alpha selection by validation macro-F1 over a fixed grid; ties go to the
// smaller alpha. Only the winner is ever scored on the test split.

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "stanceformer/traineval/trainer.hpp"

namespace stanceformer::eval {

// 0.1, 0.2, …, 1.0
inline std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(k / 10.0);
  return grid;
}

struct GridRow {
  double alpha = 0.0;
  double val_f1 = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;
  double chosen_alpha = 0.0;
  double chosen_val_f1 = 0.0;
  double chosen_test_f1 = 0.0;
};

// Index of the best score; on equal scores the smaller alpha wins.
inline std::size_t select_best_alpha(std::span<const GridRow> rows) {
  if (rows.empty()) throw ConfigError("grid search: empty alpha grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].val_f1 > rows[best].val_f1 ||
        (rows[i].val_f1 == rows[best].val_f1 && rows[i].alpha < rows[best].alpha)) {
      best = i;
    }
  }
  return best;
}

// `validate(alpha)` trains one model and returns its validation macro-F1;
// `test(alpha)` is called once, for the chosen alpha.
inline GridResult grid_search_alpha(std::span<const double> alphas, const std::function<double(double)>& validate,
                                    const std::function<double(double)>& test) {
  if (alphas.empty()) throw ConfigError("grid search: empty alpha grid");
  GridResult result;
  for (double a : alphas) {
    if (!(a >= 0.0)) throw ConfigError("grid search: alpha values must be non-negative");
    result.rows.push_back({a, validate(a)});
  }
  const auto best = select_best_alpha(result.rows);
  result.chosen_alpha = result.rows[best].alpha;
  result.chosen_val_f1 = result.rows[best].val_f1;
  result.chosen_test_f1 = test(result.chosen_alpha);
  return result;
}

// One full training run per alpha with the same seeds and configs.
inline GridResult grid_search_alpha(const EncodedSplits& data, const model::ModelConfig& model_cfg,
                                    const ta::TargetAwarenessConfig& ta_template, const TrainConfig& train_cfg,
                                    std::span<const double> alphas) {
  std::map<double, TrainResult> trained;
  auto with_alpha = [&](double a) {
    auto t = ta_template;
    t.alpha = a;
    return t;
  };
  return grid_search_alpha(
      alphas,
      [&](double a) {
        auto r = train(data, model_cfg, with_alpha(a), train_cfg);
        const double f1 = r.best_val_f1;
        trained.insert_or_assign(a, std::move(r));
        return f1;
      },
      [&](double a) {
        return evaluate(trained.at(a).params, with_alpha(a), data.test, data.labels, train_cfg.convention).macro_f1;
      });
}

}  // namespace stanceformer::eval
