// Copyright 2026 The dogrpo Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "dogrpo/common.hpp"
#include "dogrpo/sequence.hpp"
#include "dogrpo/vocab.hpp"

namespace dogrpo {

struct Grid {
  int height = kGridSide;
  int width = kGridSide;
  std::vector<Cell> cells;  // row-major

  const Cell& at(int row, int col) const { return cells[static_cast<std::size_t>(row * width + col)]; }
  Cell& at(int row, int col) { return cells[static_cast<std::size_t>(row * width + col)]; }

  static Grid blank(int height = kGridSide, int width = kGridSide) {
    return Grid{height, width, std::vector<Cell>(static_cast<std::size_t>(height * width))};
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Token j fills cell j in row-major order.
inline Grid render(const TokenSeq& image_seq, int height = kGridSide, int width = kGridSide) {
  if (static_cast<int>(image_seq.size()) != height * width) {
    throw LengthMismatch("image sequence has " + std::to_string(image_seq.size()) +
                         " tokens, expected " + std::to_string(height * width));
  }
  Grid grid = Grid::blank(height, width);
  for (std::size_t j = 0; j < image_seq.size(); ++j) {
    if (!is_image(image_seq[j]))
      throw LengthMismatch("token '" + token_name(image_seq[j]) + "' is not an image token");
    grid.cells[j] = cell_of(image_seq[j]);
  }
  return grid;
}

// Inverse of render.
inline TokenSeq read_back(const Grid& grid) {
  TokenSeq out;
  out.reserve(grid.cells.size());
  for (const Cell& c : grid.cells) out.push_back(image_token(c));
  return out;
}

inline constexpr int kCellPixels = 16;

struct Rgb {
  std::uint8_t r, g, b;
};

inline constexpr Rgb kBackground{245, 245, 245};
inline constexpr std::array<Rgb, kNumColors> kPalette = {
    Rgb{220, 40, 40}, Rgb{40, 180, 70}, Rgb{50, 90, 220}, Rgb{230, 200, 40}};

// Pixel (x, y) of a 16x16 cell belongs to the shape. Coordinates are doubled
// so the cell center (7.5, 7.5) is integral.
constexpr bool shape_covers(Shape shape, int x, int y) {
  const int dx = 2 * x - (kCellPixels - 1);
  const int dy = 2 * y - (kCellPixels - 1);
  switch (shape) {
    case Shape::kCircle:
      return dx * dx + dy * dy <= 12 * 12;  // radius 6
    case Shape::kSquare:
      return x >= 2 && x <= kCellPixels - 3 && y >= 2 && y <= kCellPixels - 3;
    case Shape::kTriangle:
      // apex at row 2, base spanning columns 2..13 at row 13
      return y >= 2 && y <= kCellPixels - 3 && (dx < 0 ? -dx : dx) <= y - 1;
  }
  return false;
}

inline Rgb pixel_color(const Grid& grid, int px, int py) {
  const Cell& cell = grid.at(py / kCellPixels, px / kCellPixels);
  if (cell.filled && shape_covers(cell.shape, px % kCellPixels, py % kCellPixels))
    return kPalette[static_cast<int>(cell.color)];
  return kBackground;
}

// ASCII "P3" pixmap, one pixel row per line.
inline std::string ppm_bytes(const Grid& grid) {
  const int w = grid.width * kCellPixels;
  const int h = grid.height * kCellPixels;
  std::string out = "P3\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(w * h) * 12);
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const Rgb c = pixel_color(grid, px, py);
      if (px) out += ' ';
      out += std::to_string(c.r);
      out += ' ';
      out += std::to_string(c.g);
      out += ' ';
      out += std::to_string(c.b);
    }
    out += '\n';
  }
  return out;
}

inline void export_image(const Grid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open image file for writing: " + path);
  out << ppm_bytes(grid);
  if (!out) throw IoFailure("failed writing image file: " + path);
}

}  // namespace dogrpo
