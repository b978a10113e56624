#pragma once

// JSON / CSV / markdown renderings of evaluation, grid-search and ablation
// results. Floating-point values are written with 17 significant digits so
// they parse back to the same double.

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/traineval/ablation.hpp"
#include "stanceformer/traineval/grid_search.hpp"
#include "stanceformer/traineval/metrics.hpp"
#include "stanceformer/traineval/trainer.hpp"

namespace stanceformer::eval {

inline std::string format_exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline nlohmann::ordered_json to_json(const Scores& s) {
  nlohmann::ordered_json j;
  j["convention"] = to_string(s.convention);
  j["labels"] = s.labels;
  j["averaged_labels"] = s.averaged_labels;
  j["macro_f1"] = s.macro_f1;
  j["n"] = s.n;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& l : s.per_label) {
    per.push_back({{"label", l.label},
                   {"precision", l.precision},
                   {"recall", l.recall},
                   {"f1", l.f1},
                   {"support", l.support}});
  }
  j["per_label"] = std::move(per);
  j["confusion"] = s.confusion;
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto j = to_json(r.scores);
  j["config"] = r.config;
  return j;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,loss,val_f1\n";
  for (const auto& h : history) os << h.epoch << ',' << format_exact(h.loss) << ',' << format_exact(h.val_f1) << '\n';
  return os.str();
}

inline std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  os << "alpha,val_f1\n";
  for (const auto& r : g.rows) os << format_exact(r.alpha) << ',' << format_exact(r.val_f1) << '\n';
  return os.str();
}

inline std::vector<GridRow> parse_grid_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "alpha,val_f1") throw DataError("grid csv: missing header");
  std::vector<GridRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      rows.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw DataError("grid csv: malformed line " + std::to_string(line_no));
    }
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const GridResult& g) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : g.rows) rows.push_back({{"alpha", r.alpha}, {"val_f1", r.val_f1}});
  nlohmann::ordered_json j;
  j["rows"] = std::move(rows);
  j["chosen_alpha"] = g.chosen_alpha;
  j["chosen_val_f1"] = g.chosen_val_f1;
  j["chosen_test_f1"] = g.chosen_test_f1;
  return j;
}

inline nlohmann::ordered_json to_json(const AblationResult& a) {
  nlohmann::ordered_json arms = nlohmann::ordered_json::array();
  for (const auto& arm : a.arms) {
    nlohmann::ordered_json reports = nlohmann::ordered_json::array();
    for (const auto& r : arm.reports) reports.push_back(to_json(r));
    arms.push_back({{"arm", arm.name},
                    {"targets_masked", arm.targets_masked},
                    {"alpha", arm.alpha},
                    {"seeds", arm.seeds},
                    {"macro_f1", arm.test_f1},
                    {"mean", arm.mean},
                    {"median", arm.median},
                    {"shared_config_hash", arm.shared_config_hash},
                    {"reports", std::move(reports)}});
  }
  nlohmann::ordered_json j;
  j["arms"] = std::move(arms);
  if (a.grid) j["grid"] = to_json(*a.grid);
  return j;
}

// Markdown table, one row per arm: arm | macro-F1 per seed | mean.
// Values carry four decimals; the JSON keeps full precision.
inline std::string ablation_markdown(const AblationResult& a) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  const auto& seeds = a.arms.empty() ? std::vector<std::uint64_t>{} : a.arms.front().seeds;
  os << "| arm |";
  for (auto s : seeds) os << " seed " << s << " |";
  os << " mean |\n|---|";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << "---|";
  os << "---|\n";
  for (const auto& arm : a.arms) {
    os << "| " << arm.name << " |";
    for (double f : arm.test_f1) os << ' ' << f << " |";
    os << ' ' << arm.mean << " |\n";
  }
  return os.str();
}

}  // namespace stanceformer::eval
