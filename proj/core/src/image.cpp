#include "chexfuse/image.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "chexfuse/errors.hpp"

namespace chexfuse {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open image '" + path + "'");

  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw IoError("not a PNG file: '" + path + "'");
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed for '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: '" + path + "'");
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Fold everything down to 8-bit gray or RGB.
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  ImageU8 image;
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color_type = png_get_color_type(png, info);
  image.channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;

  const std::size_t stride =
      static_cast<std::size_t>(image.width) * image.channels;
  if (png_get_rowbytes(png, info) != stride) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG layout: '" + path + "'");
  }
  image.pixels.resize(stride * static_cast<std::size_t>(image.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        image.pixels.data() + static_cast<std::size_t>(y) * stride;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_png(const std::string& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError("write_png: channels must be 1 or 3");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write image '" + path + "'");

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for '" + path + "'");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: '" + path + "'");
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t stride =
      static_cast<std::size_t>(image.width) * image.channels;
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(
        image.pixels.data() + static_cast<std::size_t>(y) * stride);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

/// Bilinear resample of one channel plane, half-pixel-center convention.
void resize_plane(const float* src, int src_h, int src_w, float* dst,
                  int dst_h, int dst_w) {
  if (src_h == dst_h && src_w == dst_w) {
    std::copy(src, src + static_cast<std::size_t>(src_h) * src_w, dst);
    return;
  }
  const double scale_y = static_cast<double>(src_h) / dst_h;
  const double scale_x = static_cast<double>(src_w) / dst_w;
  for (int y = 0; y < dst_h; ++y) {
    double fy = (y + 0.5) * scale_y - 0.5;
    fy = std::max(0.0, std::min(fy, static_cast<double>(src_h - 1)));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      double fx = (x + 0.5) * scale_x - 0.5;
      fx = std::max(0.0, std::min(fx, static_cast<double>(src_w - 1)));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src[static_cast<std::size_t>(y0) * src_w + x0] +
                         wx * src[static_cast<std::size_t>(y0) * src_w + x1];
      const double bot = (1.0 - wx) * src[static_cast<std::size_t>(y1) * src_w + x0] +
                         wx * src[static_cast<std::size_t>(y1) * src_w + x1];
      dst[static_cast<std::size_t>(y) * dst_w + x] =
          static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
}

}  // namespace

Tensor preprocess_image(const ImageU8& image, int target_size) {
  if (target_size < 1) throw ShapeError("preprocess_image: bad target size");
  if (image.width < 1 || image.height < 1 ||
      (image.channels != 1 && image.channels != 3)) {
    throw IoError("preprocess_image: unsupported raster");
  }
  const std::size_t plane =
      static_cast<std::size_t>(image.height) * image.width;

  Tensor out({3, target_size, target_size});
  std::vector<float> channel(plane);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 1 ? 0 : c;
    for (std::size_t i = 0; i < plane; ++i) {
      channel[i] = static_cast<float>(
          image.pixels[i * static_cast<std::size_t>(image.channels) +
                       static_cast<std::size_t>(src_c)]);
    }
    float* dst = out.data() +
                 static_cast<std::size_t>(c) * target_size * target_size;
    resize_plane(channel.data(), image.height, image.width, dst, target_size,
                 target_size);
    const double mean = kNormMean[static_cast<std::size_t>(c)];
    const double stddev = kNormStd[static_cast<std::size_t>(c)];
    const std::size_t n = static_cast<std::size_t>(target_size) * target_size;
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = static_cast<float>((dst[i] / 255.0 - mean) / stddev);
    }
  }
  return out;
}

Tensor load_image(const std::string& path, int target_size) {
  return preprocess_image(read_png(path), target_size);
}

Tensor horizontal_flip(const Tensor& chw) {
  if (chw.rank() != 3) throw ShapeError("horizontal_flip: expected CHW");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out(chw.shape());
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      const float* src =
          chw.data() + (static_cast<std::size_t>(ci) * h + y) * w;
      float* dst = out.data() + (static_cast<std::size_t>(ci) * h + y) * w;
      for (int x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  }
  return out;
}

}  // namespace chexfuse
