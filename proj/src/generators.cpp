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

#include "qarma/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "qarma/error.hpp"

namespace qarma {

namespace {

// Substream tags.
enum : std::uint64_t {
  kBasePrice = 1,
  kElastic = 2,
  kRank = 3,
  kReservation = 4,
  kCyclePrice = 5,
  kWishList = 6,
  kRarePoint = 11,
  kRareAnomaly = 12,
  kRareOrder = 13,
};

double round_cents(double x) { return std::round(x * 100.0) / 100.0; }

template <class T>
void shuffle(std::vector<T>& v, Rng& r) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[r.below(i)]);
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : stream) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  eng_.seed(seq);
}

double Rng::uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do x = eng_();
  while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (spare_) return *std::exchange(spare_, std::nullopt);
  double u1;
  do u1 = uniform();
  while (u1 == 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  return r * std::cos(t);
}

void MarketConfig::validate() const {
  if (n_items == 0 || n_users == 0 || cycles == 0 || purchases_per_cycle == 0)
    throw ConfigError("market counts must be at least 1");
  if (!(elastic_frac >= 0.0 && elastic_frac <= 1.0)) throw ConfigError("elastic fraction must be in [0, 1]");
  if (!(pareto_shape > 0.0)) throw ConfigError("pareto shape must be positive");
  if (!(price_min > 0.0 && price_min <= price_max)) throw ConfigError("price range must satisfy 0 < min <= max");
}

std::string MarketConfig::to_json() const {
  nlohmann::ordered_json j{{"n_items", n_items},
                           {"n_users", n_users},
                           {"elastic_frac", elastic_frac},
                           {"cycles", cycles},
                           {"purchases_per_cycle", purchases_per_cycle},
                           {"pareto_shape", pareto_shape},
                           {"price_min", price_min},
                           {"price_max", price_max},
                           {"seed", seed}};
  return j.dump();
}

MarketConfig MarketConfig::from_json(const std::string& text) {
  MarketConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.n_items = j.at("n_items").get<std::size_t>();
    c.n_users = j.at("n_users").get<std::size_t>();
    c.elastic_frac = j.at("elastic_frac").get<double>();
    c.cycles = j.at("cycles").get<std::size_t>();
    c.purchases_per_cycle = j.at("purchases_per_cycle").get<std::size_t>();
    c.pareto_shape = j.at("pareto_shape").get<double>();
    c.price_min = j.at("price_min").get<double>();
    c.price_max = j.at("price_max").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad market config: ") + e.what());
  }
  c.validate();
  return c;
}

std::optional<double> MarketState::reservation_price(UserIndex u, ItemId i) const {
  const auto slot = elastic_slot.at(i);
  if (slot < 0) return std::nullopt;
  return reservation.at(u)[static_cast<std::size_t>(slot)];
}

std::vector<double> MarketState::list_prices(std::size_t cycle) const {
  Rng r(config.seed, {kCyclePrice, cycle});
  std::vector<double> out(base_price.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = round_cents(base_price[i] * r.uniform(0.85, 1.15));
  return out;
}

std::vector<ItemId> MarketState::wish_list(UserIndex u, std::size_t cycle) const {
  Rng r(config.seed, {kWishList, u, cycle});
  std::vector<ItemId> out;
  out.reserve(config.purchases_per_cycle);
  for (std::size_t k = 0; k < config.purchases_per_cycle; ++k) {
    const double x = r.uniform();
    auto it = std::upper_bound(pick_cdf.begin(), pick_cdf.end(), x);
    if (it == pick_cdf.end()) --it;
    out.push_back(by_rank[static_cast<std::size_t>(it - pick_cdf.begin())]);
  }
  return out;
}

MarketState gen_market(const MarketConfig& cfg) {
  cfg.validate();
  MarketState st;
  st.config = cfg;
  const std::size_t n = cfg.n_items;
  auto& d = st.history;
  const AttrId p = d.shared_attr();
  for (std::size_t i = 0; i < n; ++i) {
    const ItemId id = d.intern_item("item" + std::to_string(i));
    d.declare(id, p, AttrKind::quantitative);
  }

  Rng base(cfg.seed, {kBasePrice});
  st.base_price.resize(n);
  for (auto& b : st.base_price) b = round_cents(base.uniform(cfg.price_min, cfg.price_max));

  std::vector<ItemId> perm(n);
  std::iota(perm.begin(), perm.end(), ItemId{0});
  Rng el(cfg.seed, {kElastic});
  shuffle(perm, el);
  const auto n_elastic = static_cast<std::size_t>(std::llround(cfg.elastic_frac * static_cast<double>(n)));
  st.elastic.assign(n, false);
  for (std::size_t k = 0; k < n_elastic; ++k) st.elastic[perm[k]] = true;
  st.elastic_slot.assign(n, -1);
  std::int64_t slots = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (st.elastic[i]) st.elastic_slot[i] = slots++;

  st.by_rank.resize(n);
  std::iota(st.by_rank.begin(), st.by_rank.end(), ItemId{0});
  Rng rank(cfg.seed, {kRank});
  shuffle(st.by_rank, rank);
  st.pick_cdf.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    total += std::pow(static_cast<double>(k + 1), -cfg.pareto_shape);
    st.pick_cdf[k] = total;
  }
  for (auto& c : st.pick_cdf) c /= total;

  st.reservation.resize(cfg.n_users);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    Rng r(cfg.seed, {kReservation, u});
    auto& row = st.reservation[u];
    row.reserve(static_cast<std::size_t>(slots));
    for (std::size_t i = 0; i < n; ++i)
      if (st.elastic[i]) row.push_back(r.uniform(0.5, 1.5) * st.base_price[i]);
  }

  for (std::size_t u = 0; u < cfg.n_users; ++u) d.history_for("u" + std::to_string(u));
  for (std::size_t c = 0; c < cfg.cycles; ++c) {
    const auto prices = st.list_prices(c);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
      auto& h = d.histories[u];
      for (ItemId i : st.wish_list(static_cast<UserIndex>(u), c)) {
        const double price = prices[i];
        if (auto res = st.reservation_price(static_cast<UserIndex>(u), i); res && price > *res) continue;
        h.transactions.push_back(Transaction{i, {{p, price}}});
        st.revenue += price;
      }
    }
    st.current_price = prices;
  }
  st.cycles_done = cfg.cycles;
  return st;
}

double offered_price(const DiscountPolicy& policy, UserIndex u, ItemId i, double list) {
  switch (policy.kind) {
    case DiscountPolicy::Kind::none:
      return list;
    case DiscountPolicy::Kind::horizontal:
      return round_cents(list * (1.0 - policy.rate));
    case DiscountPolicy::Kind::personalized: {
      if (!policy.estimator) throw ConfigError("personalized discounting needs an estimator");
      const auto est = policy.estimator(u, i);
      if (est && *est < list && *est >= list * (1.0 - policy.rate)) return round_cents(*est);
      return list;
    }
  }
  return list;
}

double run_discounting(const MarketState& state, const DiscountPolicy& policy, std::size_t cycles) {
  if (policy.rate < 0.0 || policy.rate > 1.0) throw ConfigError("discount rate must be in [0, 1]");
  double revenue = 0.0;
  for (std::size_t t = 0; t < cycles; ++t) {
    const std::size_t c = state.cycles_done + t;
    const auto prices = state.list_prices(c);
    for (std::size_t u = 0; u < state.config.n_users; ++u) {
      const auto user = static_cast<UserIndex>(u);
      for (ItemId i : state.wish_list(user, c)) {
        const double price = offered_price(policy, user, i, prices[i]);
        if (auto res = state.reservation_price(user, i); res && price > *res) continue;
        revenue += price;
      }
    }
  }
  return revenue;
}

void RareEventConfig::validate() const {
  if (dims == 0) throw ConfigError("dims must be at least 1");
  if (anomaly_dims > dims) throw ConfigError("anomaly dims exceed dims");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must be in [0, 1)");
  if (!(extremal_band >= 0.0 && extremal_band <= 1.0)) throw ConfigError("extremal band must be in [0, 1]");
  if (n_train == 0) throw ConfigError("need at least one normal point");
  if (!(normal_class_sd >= 0.0 && anomaly_class_sd >= 0.0)) throw ConfigError("class deviations must be non-negative");
}

namespace {

struct Point {
  std::vector<std::optional<double>> dims;
  double cls;
  bool anomaly;
};

Point normal_point(const RareEventConfig& cfg, std::uint64_t set, std::uint64_t k) {
  Rng r(cfg.seed, {kRarePoint, set, k});
  Point p{std::vector<std::optional<double>>(cfg.dims), 0.0, false};
  for (auto& v : p.dims) {
    const bool present = r.uniform() >= cfg.sparsity;
    const double x = r.normal();
    if (present) v = x;
  }
  p.cls = r.normal(cfg.normal_class_mean, cfg.normal_class_sd);
  return p;
}

}  // namespace

RareEventData gen_rare_event(const RareEventConfig& cfg) {
  cfg.validate();
  RareEventData out;
  std::array<std::vector<Point>, 2> sets;
  out.dim_min.assign(cfg.dims, std::numeric_limits<double>::infinity());
  out.dim_max.assign(cfg.dims, -std::numeric_limits<double>::infinity());
  for (std::uint64_t s = 0; s < 2; ++s) {
    sets[s].reserve(cfg.n_train + cfg.n_anomalies);
    for (std::uint64_t k = 0; k < cfg.n_train; ++k) {
      sets[s].push_back(normal_point(cfg, s, k));
      for (std::size_t d = 0; d < cfg.dims; ++d)
        if (const auto& v = sets[s].back().dims[d]) {
          out.dim_min[d] = std::min(out.dim_min[d], *v);
          out.dim_max[d] = std::max(out.dim_max[d], *v);
        }
    }
  }
  for (std::size_t d = 0; d < cfg.dims; ++d)
    if (out.dim_min[d] > out.dim_max[d]) out.dim_min[d] = out.dim_max[d] = 0.0;

  const std::size_t first_anomaly_dim = cfg.dims - cfg.anomaly_dims;
  for (std::uint64_t s = 0; s < 2; ++s)
    for (std::uint64_t a = 0; a < cfg.n_anomalies; ++a) {
      Rng r(cfg.seed, {kRareAnomaly, s, a});
      Point p{std::vector<std::optional<double>>(cfg.dims), 0.0, true};
      for (std::size_t d = 0; d < cfg.dims; ++d) {
        if (d >= first_anomaly_dim) {
          const double hi = out.dim_max[d];
          const double lo = hi - cfg.extremal_band * (out.dim_max[d] - out.dim_min[d]);
          p.dims[d] = r.uniform(lo, hi);
        } else {
          const bool present = r.uniform() >= cfg.sparsity;
          const double x = r.normal();
          if (present) p.dims[d] = x;
        }
      }
      p.cls = r.normal(cfg.anomaly_class_mean, cfg.anomaly_class_sd);
      sets[s].push_back(std::move(p));
    }

  for (std::uint64_t s = 0; s < 2; ++s) {
    Dataset& d = s == 0 ? out.train : out.test;
    auto& labels = s == 0 ? out.train_labels : out.test_labels;
    const AttrId value = d.shared_attr();
    std::vector<ItemId> dim_items;
    for (std::size_t k = 0; k < cfg.dims; ++k) {
      dim_items.push_back(d.intern_item("dim_" + std::to_string(k)));
      d.declare(dim_items.back(), value, AttrKind::quantitative);
    }
    const ItemId cls = d.intern_item("class");
    d.declare(cls, value, AttrKind::quantitative);

    std::vector<std::size_t> order(sets[s].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng r(cfg.seed, {kRareOrder, s});
    shuffle(order, r);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const Point& p = sets[s][order[pos]];
      UserHistory h{"r" + std::to_string(pos), {}};
      for (std::size_t k = 0; k < cfg.dims; ++k)
        if (p.dims[k]) h.transactions.push_back(Transaction{dim_items[k], {{value, *p.dims[k]}}});
      h.transactions.push_back(Transaction{cls, {{value, p.cls}}});
      d.add_history(std::move(h));
      labels.push_back(p.anomaly);
    }
  }
  return out;
}

void write_labels(std::ostream& out, const Dataset& d, const std::vector<bool>& labels) {
  if (labels.size() != d.num_users()) throw ConfigError("label count does not match the dataset");
  for (std::size_t u = 0; u < labels.size(); ++u)
    out << nlohmann::json{{"u", d.histories[u].user}, {"anomaly", static_cast<bool>(labels[u])}}.dump() << '\n';
}

std::vector<bool> read_labels(std::istream& in, const Dataset& d) {
  std::vector<int> seen(d.num_users(), -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto key = j.at("u").get<std::string>();
      const auto u = d.find_user(key);
      if (!u) throw IngestError("line " + std::to_string(lineno) + ": unknown user '" + key + "'");
      seen[*u] = j.at("anomaly").get<bool>() ? 1 : 0;
    } catch (const nlohmann::json::exception& e) {
      throw IngestError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<bool> out(seen.size());
  for (std::size_t u = 0; u < seen.size(); ++u) {
    if (seen[u] < 0) throw IngestError("no label for user '" + d.histories[u].user + "'");
    out[u] = seen[u] == 1;
  }
  return out;
}

std::vector<bool> read_labels_file(const std::string& path, const Dataset& d) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open '" + path + "'");
  return read_labels(in, d);
}

}  // namespace qarma
