#pragma once

#include <cstdint>
#include <vector>

#include "cain/rng.h"
#include "cain/tensor.h"

namespace cain {

// Deterministic synthetic textures in [-1,1], cycling through sinusoidal
// gratings, checkerboards, and smooth corner-blended gradients.
Tensor<float> make_texture(int64_t kind, int64_t size, Rng& rng);

// `count` images of shape (1,3,size,size), fully determined by the seed.
std::vector<Tensor<float>> make_dataset(int64_t count, int64_t size,
                                        uint64_t seed);

}  // namespace cain
