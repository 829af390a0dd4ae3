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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qarma {

// Fixed-length bit sequence over dense user indices 0..size()-1.
class UserBitset {
 public:
  UserBitset() = default;
  explicit UserBitset(std::size_t n) : size_(n), words_((n + 63) / 64, 0) {}

  std::size_t size() const { return size_; }

  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }

  bool none() const {
    for (auto w : words_)
      if (w) return false;
    return true;
  }

  UserBitset& operator&=(const UserBitset& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }

  UserBitset& operator|=(const UserBitset& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
  }

  friend UserBitset operator&(UserBitset a, const UserBitset& b) { return a &= b; }
  friend UserBitset operator|(UserBitset a, const UserBitset& b) { return a |= b; }

  bool operator==(const UserBitset&) const = default;

  // True iff every bit of this set is also set in o.
  bool is_subset_of(const UserBitset& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & ~o.words_[i]) return false;
    return true;
  }

  std::span<const std::uint64_t> words() const { return words_; }

  std::vector<std::size_t> members() const {
    std::vector<std::size_t> out;
    for (std::size_t w = 0; w < words_.size(); ++w) {
      auto bits = words_[w];
      while (bits) {
        out.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
        bits &= bits - 1;
      }
    }
    return out;
  }

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

// |a & b| without materializing the intersection.
inline std::size_t and_count(const UserBitset& a, const UserBitset& b) {
  auto wa = a.words();
  auto wb = b.words();
  std::size_t c = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) c += static_cast<std::size_t>(std::popcount(wa[i] & wb[i]));
  return c;
}

}  // namespace qarma
