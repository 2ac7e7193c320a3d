// Copyright 2026 The Rosetta Mining Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rosetta {

// 8-bit RGB, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int row, int col) { return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3; }
  const std::uint8_t* at(int row, int col) const {
    return pixels.data() + (static_cast<std::size_t>(row) * width + col) * 3;
  }
  bool operator==(const RgbImage&) const = default;
};

// Any PNG is converted to 8-bit RGB. A missing file throws MissingImage.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace rosetta
