#pragma once

#include <string>
#include <vector>

#include "mass/gan/model.hpp"

namespace mass::gan {

/// Binary checkpoint container:
///   "MASSCKPT" | u32 version | u64 header length | JSON header
///   | f64 target stats (7) | f64 generator params | f64 discriminator params
///   | u64 FNV-1a of everything before it
/// Numbers are little-endian; doubles round-trip bitwise.
std::vector<unsigned char> serialize_checkpoint(const GanModel& model);
GanModel deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::string& path, const GanModel& model);
GanModel load_checkpoint(const std::string& path);

}  // namespace mass::gan
