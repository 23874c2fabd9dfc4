#pragma once
// Minimal PNG codec (8-bit gray / RGB, zlib-deflated, fixed settings so
// identical pixels always produce identical bytes) plus raw little-endian
// float32 blobs for depth maps.

#include <cstdint>
#include <string>
#include <vector>

#include "draw/tensor.hpp"

namespace draw {

struct ImageU8 {
  int w = 0, h = 0, ch = 0;  // ch is 1 or 3
  std::vector<uint8_t> data; // interleaved rows
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

void write_f32(const std::string& path, const float* data, size_t n);
std::vector<float> read_f32(const std::string& path, size_t expect = 0);

// [C,H,W] floats in [0,1] <-> interleaved 8-bit rows.
ImageU8 to_u8(const Tensor<float>& chw);
Tensor<float> to_chw(const ImageU8& img);

}  // namespace draw
