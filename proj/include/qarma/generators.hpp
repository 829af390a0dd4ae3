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
#include <functional>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qarma/dataset.hpp"

namespace qarma {

// mt19937_64 keyed by (seed, stream words) through seed_seq, with uniform and
// normal draws computed by hand so the sequence is the same on every
// standard library.
class Rng {
 public:
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

  std::uint64_t next() { return eng_(); }
  double uniform();  // [0, 1), 53 bits
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);  // [0, n), unbiased
  double normal();                       // Box-Muller
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 eng_;
  std::optional<double> spare_;
};

struct MarketConfig {
  std::size_t n_items = 2000;
  std::size_t n_users = 2000;
  double elastic_frac = 0.51;
  std::size_t cycles = 10;
  std::size_t purchases_per_cycle = 10;
  double pareto_shape = 1.0;
  double price_min = 1.0;
  double price_max = 100.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static MarketConfig from_json(const std::string& text);
};

struct MarketState {
  MarketConfig config;
  std::vector<double> base_price;
  std::vector<bool> elastic;
  std::vector<double> pick_cdf;            // wish-list draw, by popularity rank
  std::vector<ItemId> by_rank;             // rank -> item
  std::vector<std::int64_t> elastic_slot;  // item -> column in reservation, -1 if inelastic
  std::vector<std::vector<double>> reservation;  // [user][slot]
  std::vector<double> current_price;       // list prices of the last simulated cycle
  std::size_t cycles_done = 0;
  double revenue = 0.0;
  Dataset history{"p"};

  std::optional<double> reservation_price(UserIndex u, ItemId i) const;
  // List prices of every item in a given cycle.
  std::vector<double> list_prices(std::size_t cycle) const;
  // The wish list of a user in a given cycle.
  std::vector<ItemId> wish_list(UserIndex u, std::size_t cycle) const;
};

// Simulates config.cycles purchase cycles. Users are "u<k>", items "item<k>",
// the shared attribute "p" is the price paid.
MarketState gen_market(const MarketConfig& cfg);

struct DiscountPolicy {
  enum class Kind { none, horizontal, personalized };
  Kind kind = Kind::none;
  double rate = 0.0;  // horizontal discount, or the personalized cap
  // Estimated reservation price of (user, item), if any.
  std::function<std::optional<double>(UserIndex, ItemId)> estimator;

  static DiscountPolicy none() { return {}; }
  static DiscountPolicy horizontal(double d) { return {Kind::horizontal, d, {}}; }
  static DiscountPolicy personalized(double cap, std::function<std::optional<double>(UserIndex, ItemId)> est) {
    return {Kind::personalized, cap, std::move(est)};
  }
};

// Price offered to a user under a policy.
double offered_price(const DiscountPolicy& policy, UserIndex u, ItemId i, double list);

// Runs `cycles` more cycles after the simulated ones, with the same random
// streams, and returns the revenue.
double run_discounting(const MarketState& state, const DiscountPolicy& policy, std::size_t cycles);

struct RareEventConfig {
  std::size_t dims = 20;
  double sparsity = 0.9;
  std::size_t n_train = 35000;  // normal points per set
  std::size_t n_anomalies = 100;
  std::size_t anomaly_dims = 3;  // the last ones
  double extremal_band = 0.01;
  double normal_class_mean = 0.0;
  double normal_class_sd = 1.0;
  double anomaly_class_mean = 50.0;
  double anomaly_class_sd = 10.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RareEventData {
  Dataset train{"value"};
  Dataset test{"value"};
  std::vector<bool> train_labels;  // by history index
  std::vector<bool> test_labels;
  // Per dimension, the pooled normal-point extremes the band refers to.
  std::vector<double> dim_min;
  std::vector<double> dim_max;
};

// Items "dim_<d>" (d from 0) and "class", attribute "value". Anomalies always
// carry their anomaly dimensions, placed in the top band of each range.
RareEventData gen_rare_event(const RareEventConfig& cfg);

// One line per history: {"u": key, "anomaly": bool}.
void write_labels(std::ostream& out, const Dataset& d, const std::vector<bool>& labels);
std::vector<bool> read_labels(std::istream& in, const Dataset& d);
std::vector<bool> read_labels_file(const std::string& path, const Dataset& d);

}  // namespace qarma
