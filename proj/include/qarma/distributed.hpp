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

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qarma/engine.hpp"

namespace qarma {

// Wire format: 4-byte big-endian payload length, then a JSON object with a
// "type" field.
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

std::string encode_frame(std::string_view payload);

// Splits the first complete frame off the front of buf. Returns the payload
// and the bytes consumed, or nullopt when buf holds only part of a frame.
// Throws ProtocolError on a length above kMaxFrameBytes.
std::optional<std::pair<std::string, std::size_t>> decode_frame(std::string_view buf);

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  bool operator==(const Endpoint&) const = default;
};

// "host:port"; throws ConfigError.
Endpoint parse_endpoint(std::string_view s);
// Comma separated endpoints.
std::vector<Endpoint> parse_endpoints(std::string_view s);

std::string digest_hex(std::uint64_t digest);

// Engine configuration as carried in HELLO.
std::string config_to_json(const EngineConfig& cfg);
EngineConfig config_from_json(std::string_view text);

struct WorkerOptions {
  Endpoint listen{"127.0.0.1", 0};
  std::string data_path;
  std::size_t threads = 1;
  // Fault injection: drop the connection on receiving task number N + 1.
  std::optional<std::size_t> fail_after_tasks;
  // With fault injection, terminate the process instead of returning.
  bool exit_on_fail = false;
  // Called once the socket is bound, with the actual port.
  std::function<void(std::uint16_t)> on_listening;
};

// Loads the dataset, then serves coordinator connections one at a time until
// a BYE arrives. Indices are rebuilt only when the engine config changes.
void serve_worker(const WorkerOptions& opts);

struct CoordinatorOptions {
  std::vector<Endpoint> workers;
  std::uint64_t digest = 0;
  std::chrono::milliseconds task_timeout{60000};
  std::chrono::milliseconds connect_timeout{2000};
  // Send BYE to every live worker on destruction.
  bool shutdown_workers = true;
};

struct CoordinatorStats {
  std::size_t tasks_sent = 0;
  std::size_t results_accepted = 0;
  std::size_t duplicates_ignored = 0;
  std::size_t redispatched = 0;
  std::size_t local_batches = 0;
  std::size_t connects = 0;
  std::size_t disconnects = 0;
};

// Runs level batches on remote workers. Missing workers are (re)connected at
// every level start; batches of a lost or silent worker go back to the
// queue; with no live worker the remaining batches run in-process.
class Coordinator : public LevelExecutor {
 public:
  explicit Coordinator(CoordinatorOptions opts);
  ~Coordinator() override;
  Coordinator(const Coordinator&) = delete;
  Coordinator& operator=(const Coordinator&) = delete;

  LevelOutcome run_level(const MiningContext& ctx, std::size_t k, std::span<const Itemset> itemsets,
                         const RuleStore& snapshot) override;

  // Sends BYE to every live worker and closes the connections.
  void shutdown();

  std::size_t live_workers() const;
  const CoordinatorStats& stats() const { return stats_; }

 private:
  struct Session;
  void connect_missing(const MiningContext& ctx);
  void drop(Session& s);

  CoordinatorOptions opts_;
  std::vector<std::unique_ptr<Session>> sessions_;
  CoordinatorStats stats_;
};

}  // namespace qarma
