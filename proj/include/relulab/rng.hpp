#pragma once

#include <cstdint>
#include <random>

namespace relulab {

using Rng = std::mt19937_64;

// Independent stream for sample i of run `run` under a master seed. Results
// never depend on which worker draws them.
inline Rng make_stream(std::uint64_t master, std::uint64_t run, std::uint64_t i = 0) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(master), hi(master), lo(run), hi(run), lo(i), hi(i)};
    return Rng(seq);
}

}  // namespace relulab
