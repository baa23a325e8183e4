#pragma once

#include <string>
#include <vector>

#include "keyetm/model.hpp"
#include "keyetm/prior.hpp"

namespace keyetm {

struct Checkpoint {
    ModelParams params;
    SeedSpec seeds;  // empty topics for an unguided run
    TrainConfig config;
    std::vector<EpochStats> history;
};

// Binary container: magic "KETM", format version u16, precision tag u8,
// dims (V, K, L, H1, H2) as u32, the parameter matrices in fixed order
// (alpha, W1, b1, W2, b2, Wmu, bmu, Wlogvar, blogvar, rho) row-major
// little-endian, then a u64-length-prefixed JSON trailer carrying the
// vocabulary hash, seed spec, training config, and per-epoch history.
// Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ModelParams& params, const SeedSpec& seeds,
                     const TrainConfig& config, const std::vector<EpochStats>& history);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace keyetm
