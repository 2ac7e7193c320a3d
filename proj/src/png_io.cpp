// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#include "rosetta/png_io.hpp"

#include <cstring>

#include <png.h>

#include "rosetta/error.hpp"

namespace rosetta {

RgbImage read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingImage, path.string());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(ErrorKind::IoError, path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::IoError, path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& img) {
  if (img.width < 1 || img.height < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw Error(ErrorKind::InvalidArgument, "write_png: malformed image buffer");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw Error(ErrorKind::IoError, path.string() + ": " + image.message);
}

}  // namespace rosetta
