#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flgn/tensor.hpp"

namespace flgn {

// Binary tensor container. Layout, all little-endian:
//   magic "FLGN" | u32 version | u64 tensor count
//   per tensor: u32 name length | name bytes | u32 rank (always 2)
//               | u64 rows | u64 cols | f64 data (row-major)
//   u64 metadata length | metadata bytes (JSON)
// Tensors are written in the order given; loading preserves it.
inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    std::string metadata_json;  // "{}" when absent

    // Lookup by exact name; throws CheckpointError when missing.
    const Tensor& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace flgn
