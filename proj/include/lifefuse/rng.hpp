#pragma once

#include <cstdint>
#include <random>

namespace lifefuse {

// splitmix64 step; good avalanche, used only to derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent per-purpose stream so that consuming randomness in one
// subsystem (e.g. dropout) never shifts another (e.g. batch shuffling).
enum class RngPurpose : std::uint64_t {
  scenario = 1,
  echo_noise = 2,
  acoustic_noise = 3,
  weight_init = 4,
  shuffle = 5,
  dropout = 6,
  augment = 7,
};

inline std::uint64_t derive_seed(std::uint64_t master, RngPurpose purpose) {
  std::uint64_t state = master ^ (0xa0761d6478bd642fULL + static_cast<std::uint64_t>(purpose));
  std::uint64_t mixed = splitmix64(state);
  return splitmix64(state) ^ mixed;
}

inline std::mt19937_64 make_engine(std::uint64_t master, RngPurpose purpose) {
  return std::mt19937_64(derive_seed(master, purpose));
}

}  // namespace lifefuse
