#pragma once

#include "stx/scattering.hpp"

#include <filesystem>

namespace stx {

// RIFF/WAVE reader for integer PCM (8/16/24/32-bit) and 32-bit float.
// Multi-channel input is averaged down to mono; samples scaled to [-1, 1].
Signal read_wav(const std::filesystem::path& path);

// 16-bit PCM mono writer; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Signal& signal);

}  // namespace stx
