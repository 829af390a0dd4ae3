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

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qarma/dataset.hpp"
#include "qarma/itemsets.hpp"
#include "qarma/rule.hpp"
#include "qarma/support_index.hpp"

namespace qarma {

struct EngineConfig {
  double min_support = 0.1;
  // Minimum value per interestingness metric; every one must be met.
  std::vector<std::pair<Metric, double>> thresholds{{Metric::confidence, 0.8}};
  std::vector<Metric> ltf{Metric::confidence};
  std::string shared_attr;  // empty: use the dataset's
  std::size_t max_len = 3;
  std::size_t workers = 1;
  std::size_t batch = 128;
  Mode mode = Mode::geq;
  bool widest = false;
  std::vector<std::string> negate_attrs;
  // Skip grid values whose rules have the same covering sets as the
  // previous value's; such rules and all their extensions are dominated.
  bool prune_equivalent = true;
  // Treat antecedent quantifications implied by item presence as absent
  // when testing dominance.
  bool presence_implied_dominance = true;
  // Re-check every support break against the remaining grid values.
  bool audit_breaks = false;

  void validate() const;
};

// Dataset plus every index the search reads. Immutable once built.
class MiningContext {
 public:
  MiningContext(Dataset d, EngineConfig cfg);
  MiningContext(const MiningContext&) = delete;
  MiningContext& operator=(const MiningContext&) = delete;

  const Dataset& dataset() const { return data_; }
  const ValueIndex& values() const { return values_; }
  const SupportIndex& index() const { return index_; }
  const OrdMaps& ord() const { return ord_; }
  const EngineConfig& config() const { return cfg_; }
  const DominanceOptions& dominance() const { return dominance_; }
  const ImpliedBounds& implied() const { return implied_; }

 private:
  EngineConfig cfg_;
  Dataset data_;
  ValueIndex values_;
  SupportIndex index_;
  OrdMaps ord_;
  ImpliedBounds implied_;
  DominanceOptions dominance_;
};

// B -> I before quantification.
struct BaseRule {
  std::vector<ItemId> antecedent;  // item order
  ItemId consequent;

  bool operator==(const BaseRule&) const = default;
};

// One rule per choice of consequent item; throws on itemsets smaller than 2.
std::vector<BaseRule> base_rules(const Itemset& itemset);

// Duplicate-avoidance checks of the quantification search.
bool eligible_item(ItemId j, std::span<const Quantification> q, std::span<const ItemId> antecedent, const OrdMaps& ord);
bool eligible_attr(ItemId j, AttrId a, std::span<const Quantification> q, std::span<const ItemId> antecedent,
                   const OrdMaps& ord);

struct TraceEvent {
  enum class Kind {
    consequent_skipped,     // consequent level fails support
    consequent_equivalent,  // same cover as the previous consequent level
    consequent_started,
    pushed,                 // support ok, entered the queue
    equivalent_skipped,     // same covers as the previous antecedent level
    added,                  // interesting and undominated
    dominated,              // interesting but dominated
    broke,                  // support failed, value loop stopped
  };
  Kind kind;
  Rule rule;
  std::size_t joint = 0;
  std::size_t antecedent = 0;
};

struct ExpandStats {
  std::size_t candidates = 0;
  std::size_t breaks_audited = 0;
  std::size_t audit_violations = 0;

  ExpandStats& operator+=(const ExpandStats& o) {
    candidates += o.candidates;
    breaks_audited += o.breaks_audited;
    audit_violations += o.audit_violations;
    return *this;
  }
};

// Quantifies one base rule. Candidates are checked against the read-only
// snapshot and the worker-local store; accepted rules go into `local`.
void expand_rule(const MiningContext& ctx, const BaseRule& base, const RuleStore& snapshot, RuleStore& local,
                 ExpandStats& stats, std::vector<TraceEvent>* trace = nullptr);

// All base rules of a batch of itemsets; returns the local additions.
std::vector<ScoredRule> process_batch(const MiningContext& ctx, std::span<const Itemset> itemsets,
                                      const RuleStore& snapshot, ExpandStats& stats);

struct LevelOutcome {
  std::vector<std::vector<ScoredRule>> additions;  // per batch, in batch order
  ExpandStats stats;
  std::size_t remote_batches = 0;
};

// Runs the batches of one level against an immutable snapshot.
class LevelExecutor {
 public:
  virtual ~LevelExecutor() = default;
  virtual LevelOutcome run_level(const MiningContext& ctx, std::size_t k, std::span<const Itemset> itemsets,
                                 const RuleStore& snapshot) = 0;
};

std::vector<std::span<const Itemset>> make_batches(std::span<const Itemset> itemsets, std::size_t batch);

// Fork/join over a shared batch queue with `workers` threads. A batch size
// of 0 takes the one in the engine config.
class ThreadPoolExecutor : public LevelExecutor {
 public:
  explicit ThreadPoolExecutor(std::size_t workers, std::size_t batch = 0) : workers_(workers), batch_(batch) {}
  LevelOutcome run_level(const MiningContext& ctx, std::size_t k, std::span<const Itemset> itemsets,
                         const RuleStore& snapshot) override;

 private:
  std::size_t workers_;
  std::size_t batch_;
};

struct LevelReport {
  std::size_t k = 0;
  std::size_t itemsets = 0;
  std::size_t rules_added = 0;
};

struct RunReport {
  double total_secs = 0.0;
  double itemset_secs = 0.0;
  std::vector<LevelReport> levels;
  std::size_t workers = 1;
  std::size_t batch = 128;
  std::size_t rules = 0;
  std::vector<std::size_t> frequent_by_size;
  ExpandStats stats;
  std::size_t remote_batches = 0;
  bool widest = false;

  std::string to_json() const;
};

struct MineResult {
  std::vector<ScoredRule> rules;
  RunReport report;
};

// Merges one level's additions into the global store; returns how many were kept.
std::size_t merge_level(RuleStore& global, const LevelOutcome& outcome, const DominanceOptions& opts);

MineResult mine(const MiningContext& ctx, LevelExecutor& executor);
MineResult mine(const MiningContext& ctx);
MineResult mine(Dataset d, const EngineConfig& cfg);

}  // namespace qarma
