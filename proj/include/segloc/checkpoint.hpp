#pragma once

#include <filesystem>
#include <string>

#include "segloc/bank.hpp"
#include "segloc/encoder.hpp"

namespace segloc {

/// Full training state: query/key encoders, optimizer velocity, negative-key
/// bank, step counter, and a hash of the config that produced it.
struct TrainCheckpoint {
    EncoderParams query;
    EncoderParams key;
    EncoderParams velocity;
    ClassQueueBank bank;
    int step = 0;
    std::string config_hash;
};

/// File layout: a little-endian u64 header length, a JSON header listing
/// tensor names/shapes/byte offsets plus step and config hash, then one blob
/// of little-endian 64-bit floats. Loading validates every encoder tensor
/// shape against the architecture constants and revalidates bank invariants.
void save_checkpoint(const std::filesystem::path& path, const TrainCheckpoint& ckpt);
TrainCheckpoint load_checkpoint(const std::filesystem::path& path);

} // namespace segloc
