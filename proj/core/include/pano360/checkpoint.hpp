#pragma once

#include <string>

#include "pano360/dit_core.hpp"

namespace pano360 {

// Binary model snapshot: magic + version + ModelConfig + named tensor
// directory (shapes and payload offsets) + little-endian float32 payload.
// The frozen patch codec is stored alongside the trainable parameters, so a
// loaded model reproduces the saved one exactly. save(load(f)) is
// byte-identical to f.
void save_checkpoint(const PanoModel& m, const std::string& path);
PanoModel load_checkpoint(const std::string& path);

}  // namespace pano360
