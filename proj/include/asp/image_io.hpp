#pragma once

#include <png.h>
#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "asp/common.hpp"

namespace asp {

/// Quantize a [-1,1] float image to 8-bit and back; the round trip through
/// PNG is exact for tensors produced this way.
inline torch::Tensor quantize_unit(const torch::Tensor& image) {
  return ((image.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0)
      .round()
      .to(torch::kUInt8);
}

inline torch::Tensor dequantize_unit(const torch::Tensor& bytes) {
  return bytes.to(torch::kFloat) / 255.0 * 2.0 - 1.0;
}

/// Read an 8-bit RGB PNG into a [3,H,W] float tensor in [-1,1].
inline torch::Tensor load_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path + ": " + image.message);
  }
  const auto h = static_cast<std::int64_t>(image.height);
  const auto w = static_cast<std::int64_t>(image.width);
  auto bytes = torch::from_blob(buffer.data(), {h, w, 3}, torch::kUInt8).clone();
  return dequantize_unit(bytes.permute({2, 0, 1}).contiguous());
}

/// Write a [3,H,W] float tensor in [-1,1] as an 8-bit RGB PNG.
inline void save_png(const std::string& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3)
    throw ShapeError("save_png expects a [3,H,W] tensor");
  auto bytes = quantize_unit(image).permute({1, 2, 0}).contiguous();
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(image.size(2));
  out.height = static_cast<png_uint_32>(image.size(1));
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data_ptr(), 0,
                               nullptr))
    throw DataError("cannot write PNG " + path + ": " + out.message);
}

/// Write an [H,W] 0/1 mask as an 8-bit grayscale PNG.
inline void save_mask_png(const std::string& path, const torch::Tensor& mask) {
  if (mask.dim() != 2) throw ShapeError("save_mask_png expects [H,W]");
  auto bytes = (mask.to(torch::kFloat).clamp(0, 1) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .contiguous();
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(mask.size(1));
  out.height = static_cast<png_uint_32>(mask.size(0));
  out.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data_ptr(), 0,
                               nullptr))
    throw DataError("cannot write PNG " + path + ": " + out.message);
}

inline torch::Tensor load_mask_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read PNG " + path + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path + ": " + image.message);
  }
  const auto h = static_cast<std::int64_t>(image.height);
  const auto w = static_cast<std::int64_t>(image.width);
  auto bytes = torch::from_blob(buffer.data(), {h, w}, torch::kUInt8).clone();
  return (bytes > 127).to(torch::kFloat);
}

/// Rec.601 luminance of a [-1,1] RGB image, on the same [-1,1] scale.
inline torch::Tensor luminance(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3)
    throw ShapeError("luminance expects a [3,H,W] tensor");
  return 0.299 * image[0] + 0.587 * image[1] + 0.114 * image[2];
}

}  // namespace asp
