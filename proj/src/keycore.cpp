#include "fragkey/keycore.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "fragkey/error.hpp"

namespace fragkey {

void validate_key_type(long long key_type) {
  if (key_type < 8 || key_type % 8 != 0 || key_type > static_cast<long long>(kMaxKeyBits))
    throw Error(Errc::parameter, "key_type must be a positive multiple of 8 in [8, " +
                                     std::to_string(kMaxKeyBits) + "], got " + std::to_string(key_type));
}

SessionKey generate_key(long long key_type, Rng& rng) {
  validate_key_type(key_type);
  const auto nbytes = static_cast<std::size_t>(key_type / 8);
  std::vector<std::uint8_t> bytes;
  bytes.reserve(nbytes + 8);
  while (bytes.size() < nbytes) {
    std::uint64_t word = rng();
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(word >> (8 * i)));
  }
  bytes.resize(nbytes);
  return SessionKey{BitString(std::move(bytes), nbytes * 8)};
}

FragmentSet split_key(const SessionKey& key, long long n) {
  const std::size_t length = key.bits.size();
  if (n < 1 || static_cast<unsigned long long>(n) > length)
    throw Error(Errc::parameter, "num_of_splits must be in [1, " + std::to_string(length) + "], got " +
                                     std::to_string(n));
  const auto parts = static_cast<std::size_t>(n);
  const std::size_t base = length / parts;
  const std::size_t longer = length % parts;

  FragmentSet set;
  set.fragments.reserve(parts);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t count = base + (i < longer ? 1 : 0);
    set.fragments.push_back(Fragment{i + 1, parts, key.bits.slice(offset, count)});
    set.permutation.push_back(i + 1);
    offset += count;
  }
  return set;
}

FragmentSet shuffle_fragments(FragmentSet set, Rng& rng) {
  if (set.shuffled) throw Error(Errc::state, "fragment set is already shuffled");
  auto& frags = set.fragments;
  for (std::size_t i = frags.size(); i > 1; --i) {
    const std::size_t j = uniform_index(rng, i);
    std::swap(frags[i - 1], frags[j]);
  }
  for (std::size_t pos = 0; pos < frags.size(); ++pos) set.permutation[pos] = frags[pos].index;
  set.shuffled = true;
  return set;
}

SessionKey reassemble(const std::vector<Fragment>& fragments) {
  if (fragments.empty()) throw IncompleteSetError({}, 0);
  const std::size_t total = fragments.front().total;
  std::map<std::size_t, const Fragment*> by_index;
  for (const auto& f : fragments) {
    if (f.total != total)
      throw Error(Errc::conflict, "fragments disagree on total (" + std::to_string(total) + " vs " +
                                      std::to_string(f.total) + ")");
    if (f.index < 1 || f.index > total)
      throw Error(Errc::conflict, "fragment index " + std::to_string(f.index) + " outside [1, " +
                                      std::to_string(total) + "]");
    auto [it, inserted] = by_index.emplace(f.index, &f);
    if (!inserted && it->second->payload != f.payload)
      throw Error(Errc::conflict, "conflicting payloads for part " + std::to_string(f.index));
  }
  if (by_index.size() != total) {
    std::vector<std::size_t> missing;
    for (std::size_t i = 1; i <= total; ++i)
      if (!by_index.contains(i)) missing.push_back(i);
    throw IncompleteSetError(std::move(missing), total);
  }
  SessionKey key;
  for (const auto& [index, frag] : by_index) key.bits.append(frag->payload);
  return key;
}

}  // namespace fragkey
