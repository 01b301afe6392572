#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixscale/config/config.hpp"
#include "mixscale/core/tensor.hpp"

namespace mixscale {

struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FingerprintError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One named array inside a checkpoint. kind 0 = parameter, 1 = buffer,
// 2 = optimizer state.
struct CheckpointEntry {
    uint8_t kind = 0;
    std::string name;
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    bool operator==(const CheckpointEntry&) const = default;
};

// Single binary blob with a version byte, the config fingerprint, the epoch
// counter and a trailing content hash. Round-trips bit-exactly.
struct CheckpointRecord {
    uint64_t fingerprint = 0;
    int32_t epoch = 0;
    std::vector<CheckpointEntry> entries;

    bool operator==(const CheckpointRecord&) const = default;
};

void save_checkpoint(const CheckpointRecord& record, const std::string& path);
CheckpointRecord load_checkpoint(const std::string& path);

}  // namespace mixscale
