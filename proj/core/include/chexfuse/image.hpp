#pragma once

#include <array>
#include <string>
#include <vector>

#include "chexfuse/tensor.hpp"

namespace chexfuse {

/// ImageNet normalization constants, inherited with the rest of the CheXNet
/// preprocessing convention.
inline constexpr std::array<double, 3> kNormMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kNormStd = {0.229, 0.224, 0.225};

/// Decoded 8-bit raster, HWC interleaved, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<unsigned char> pixels;
};

/// PNG decode. Palette/16-bit/alpha inputs are folded down to 8-bit gray or
/// RGB. Throws IoError (carrying the path) on missing or corrupt files.
ImageU8 read_png(const std::string& path);

/// 8-bit PNG encode, 1 or 3 channels.
void write_png(const std::string& path, const ImageU8& image);

/// Grayscale replication to 3 channels -> bilinear resize to target x target
/// -> scale to [0,1] -> per-channel ImageNet normalization. CHW output.
Tensor preprocess_image(const ImageU8& image, int target_size);

/// read_png + preprocess_image.
Tensor load_image(const std::string& path, int target_size = 224);

/// Mirror along the width axis; applying it twice restores the input.
Tensor horizontal_flip(const Tensor& chw);

}  // namespace chexfuse
