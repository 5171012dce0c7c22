#pragma once

#include <cstddef>
#include <vector>

#include "fragkey/bits.hpp"
#include "fragkey/random.hpp"

namespace fragkey {

inline constexpr std::size_t kMaxKeyBits = 65528;

struct SessionKey {
  BitString bits;
  std::size_t key_type() const noexcept { return bits.size(); }
  friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

struct Fragment {
  std::size_t index = 0;  // 1-based part index
  std::size_t total = 0;
  BitString payload;
  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct FragmentSet {
  std::vector<Fragment> fragments;       // dispatch order
  std::vector<std::size_t> permutation;  // permutation[pos] = original index of the fragment at dispatch pos
  bool shuffled = false;
};

/// Throws Errc::parameter unless 8 <= key_type <= kMaxKeyBits and key_type % 8 == 0.
void validate_key_type(long long key_type);

SessionKey generate_key(long long key_type, Rng& rng);

/// Contiguous slices; the first (L mod n) fragments carry ceil(L/n) bits, the rest floor(L/n).
FragmentSet split_key(const SessionKey& key, long long n);

/// Fisher-Yates over the dispatch order. Throws Errc::state on an already shuffled set.
FragmentSet shuffle_fragments(FragmentSet set, Rng& rng);

/// Reorders by part index and concatenates. Throws IncompleteSetError or Errc::conflict.
SessionKey reassemble(const std::vector<Fragment>& fragments);

}  // namespace fragkey
