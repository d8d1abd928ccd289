#pragma once

#include <cstdint>
#include <vector>

#include "dbgi/inkml.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

struct RasterConfig {
    int target_height = 64;
    int stroke_width = 2;

    void validate() const;
};

// Integer Bresenham segment dilated to `stroke_width` (a stroke_width-square
// stamp at every line pixel). Out-of-bounds pixels are clipped.
void draw_segment(std::vector<std::uint8_t>& image, std::int64_t width, std::int64_t height,
                  std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1,
                  int stroke_width);

// Min-max normalizes the traces to target_height preserving aspect ratio,
// joins consecutive points with dilated Bresenham segments, and pads the
// width to a multiple of 16. Output is a strictly binary {1, H, W} tensor
// (background 0, ink 1). A degenerate bounding box renders a centered dot.
Tensor rasterize(const InkDocument& doc, int target_height, int stroke_width);

}  // namespace dbgi
