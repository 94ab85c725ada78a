#pragma once

#include <cstdint>
#include <random>

namespace ltngan {

using Rng = std::mt19937_64;

/// Independent generator streams derived from one master seed, so that an
/// ablation touching one source of randomness leaves the others unchanged.
struct RngStreams {
  enum Stream : std::uint64_t { kData = 1, kLatent, kDropout, kInit, kPredicate, kEval };

  explicit RngStreams(std::uint64_t seed)
      : data(derive(seed, kData)),
        latent(derive(seed, kLatent)),
        dropout(derive(seed, kDropout)),
        init(derive(seed, kInit)),
        predicate(derive(seed, kPredicate)),
        eval(derive(seed, kEval)) {}

  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x4c544eu};
    return Rng(seq);
  }

  Rng data;
  Rng latent;
  Rng dropout;
  Rng init;
  Rng predicate;
  Rng eval;
};

}  // namespace ltngan
