#pragma once

#include <cstdint>
#include <random>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace a3gan {

/// SplitMix64 finalizer; decorrelates nearby seeds.
constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the independent stream `stream` at position `index` under `seed`.
/// Training derives every per-step random draw from this, which is what makes
/// resumption from a checkpoint reproduce the uninterrupted run.
constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index = 0) {
    return mix64(mix64(seed ^ mix64(stream)) + index);
}

inline torch::Generator make_torch_generator(uint64_t seed) {
    return at::detail::createCPUGenerator(seed);
}

using Rng = std::mt19937_64;

}  // namespace a3gan
