// Copyright 2026, The qarma authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qarma/dataset.hpp"
#include "qarma/generators.hpp"
#include "qarma/rule.hpp"

namespace qarma {

// Per (item, attr) the sorted values of one history, for repeated rule checks.
class HistoryView {
 public:
  explicit HistoryView(const UserHistory& h);

  bool has(ItemId i) const { return items_.count(i) != 0; }
  std::optional<double> max(ItemId i, AttrId a) const;
  bool has_exact(ItemId i, AttrId a, double v) const;

 private:
  std::map<ItemId, std::vector<std::pair<AttrId, std::vector<double>>>> items_;
  const std::vector<double>* find(ItemId i, AttrId a) const;
};

std::vector<HistoryView> history_views(const Dataset& d);

// The antecedent part of the covering condition: B present, every antecedent
// quantification met.
bool antecedent_fires(const Rule& r, const HistoryView& h);
// The full covering condition, consequent included.
bool covers(const Rule& r, const HistoryView& h);

// Rules re-expressed in another dataset's ids, matched by name.
std::vector<ScoredRule> translate_rules(const std::vector<ScoredRule>& rules, const Dataset& from, const Dataset& to);

// |union of covering sets| / |D|. Throws ConfigError on an empty dataset.
double coverage(const std::vector<ScoredRule>& rules, const Dataset& d);

struct Detection {
  double detection = 0.0;    // flagged anomalies / anomalies
  double false_alarm = 0.0;  // flagged normals / normals
  double accuracy = 0.0;     // correct / all
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Rules predicting the target: consequent item `target` with value >= threshold.
std::vector<ScoredRule> predicting_rules(const std::vector<ScoredRule>& rules, ItemId target, double threshold);

// Flags a history iff some predicting rule fires on it. Throws ConfigError
// when labels are missing or do not match the dataset.
Detection detect(const std::vector<ScoredRule>& rules, const Dataset& d, const std::vector<bool>& labels, ItemId target,
                 double threshold = 25.0);

struct RocPoint {
  double conf_cut = 0.0;
  Detection result;
};

// detect() over the rules with confidence >= each cut. Without explicit cuts,
// the distinct confidences of the predicting rules (or a single 0 cut).
std::vector<RocPoint> roc(const std::vector<ScoredRule>& rules, const Dataset& d, const std::vector<bool>& labels,
                          ItemId target, double threshold = 25.0, std::optional<std::vector<double>> cuts = std::nullopt);

// "conf_cut,detection,false_alarm,accuracy" lines.
void write_roc(std::ostream& out, const std::vector<RocPoint>& points);

// Largest consequent value among rules on `item` with confidence >= min_conf
// whose antecedent fires on the history.
std::optional<double> estimate_reservation_price(const std::vector<ScoredRule>& rules, const HistoryView& h, ItemId item,
                                                 double min_conf = 0.7);

// estimate_reservation_price for every (user, item) of a dataset, precomputed.
class ReservationEstimator {
 public:
  ReservationEstimator(const std::vector<ScoredRule>& rules, const Dataset& d, double min_conf = 0.7);
  std::optional<double> operator()(UserIndex u, ItemId i) const;

 private:
  std::vector<std::map<ItemId, double>> per_user_;
};

struct DiscountRow {
  double level = 0.0;
  double baseline = 0.0;
  double horizontal = 0.0;
  double horizontal_change = 0.0;  // percent of baseline
  double personalized = 0.0;
  double personalized_change = 0.0;
};

// Baseline, horizontal and personalized revenue for each discount level,
// over `cycles` cycles after the simulated ones. Rules must be mined on the
// market's history.
std::vector<DiscountRow> report_discounting(const MarketState& market, const std::vector<ScoredRule>& rules,
                                            const std::vector<double>& levels, std::size_t cycles,
                                            double min_conf = 0.7);

void write_discount_report(std::ostream& out, const std::vector<DiscountRow>& rows);

}  // namespace qarma
