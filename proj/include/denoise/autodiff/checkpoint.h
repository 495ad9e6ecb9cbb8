// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DENOISE_AUTODIFF_CHECKPOINT_H_
#define DENOISE_AUTODIFF_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "denoise/autodiff/tensor.h"

namespace denoise::ad {

// Binary container for named float64 arrays. All integers and floats are
// little-endian:
//
//   char[4]  magic "DNCK"
//   u32      format version
//   u64      metadata length, then that many bytes of UTF-8 JSON
//   u64      tensor count
//   per tensor:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]
//
// The metadata echoes the model configuration (and a task tag for
// auxiliary networks).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json meta = nlohmann::json::object();
  NamedTensors tensors;

  const Tensor& at(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values from `ckpt` into `dst` by name; shapes must match.
void restore_tensors(const Checkpoint& ckpt, NamedTensors& dst);

}  // namespace denoise::ad

#endif  // DENOISE_AUTODIFF_CHECKPOINT_H_
