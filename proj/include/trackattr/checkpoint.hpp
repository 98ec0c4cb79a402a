#pragma once

#include <cstdint>
#include <string>

#include "trackattr/params.hpp"

namespace trackattr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
    std::uint32_t version = 0;
    std::string spec_echo;  // model-spec text recorded at save time
    ParamStore params;
};

// Binary layout, all fields little-endian: 8-byte magic, u32 version,
// length-prefixed spec echo string, u64 tensor count, then per tensor a
// length-prefixed name, u32 ndim, i64 dims, and float64 values.
void save_checkpoint(const std::string& path, const std::string& spec_echo,
                     const ParamStore& params);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace trackattr
