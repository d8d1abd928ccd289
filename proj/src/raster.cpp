#include "dbgi/raster.hpp"

#include <algorithm>
#include <cmath>

namespace dbgi {

void RasterConfig::validate() const {
    if (target_height < 16) throw ContractViolation("raster: target_height must be >= 16");
    if (stroke_width < 1) throw ContractViolation("raster: stroke_width must be >= 1");
}

namespace {

void stamp(std::vector<std::uint8_t>& image, std::int64_t width, std::int64_t height,
           std::int64_t x, std::int64_t y, int stroke_width) {
    const int lo = -((stroke_width - 1) / 2);
    const int hi = stroke_width / 2;
    for (int dy = lo; dy <= hi; ++dy)
        for (int dx = lo; dx <= hi; ++dx) {
            const std::int64_t px = x + dx, py = y + dy;
            if (px >= 0 && px < width && py >= 0 && py < height)
                image[static_cast<std::size_t>(py * width + px)] = 1;
        }
}

}  // namespace

void draw_segment(std::vector<std::uint8_t>& image, std::int64_t width, std::int64_t height,
                  std::int64_t x0, std::int64_t y0, std::int64_t x1, std::int64_t y1,
                  int stroke_width) {
    std::int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const std::int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    std::int64_t err = dx + dy;
    while (true) {
        stamp(image, width, height, x0, y0, stroke_width);
        if (x0 == x1 && y0 == y1) break;
        const std::int64_t e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

Tensor rasterize(const InkDocument& doc, int target_height, int stroke_width) {
    RasterConfig{target_height, stroke_width}.validate();
    if (doc.traces.empty()) throw ContractViolation("rasterize: document has no traces");

    double xmin = doc.traces[0][0].x, xmax = xmin;
    double ymin = doc.traces[0][0].y, ymax = ymin;
    for (const InkTrace& trace : doc.traces)
        for (const InkPoint& p : trace) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    const double box_w = xmax - xmin, box_h = ymax - ymin;

    const int margin = stroke_width;
    const std::int64_t height = target_height;
    const double usable_h = static_cast<double>(target_height - 1 - 2 * margin);

    // height-fit scale; a width-only box falls back to fitting its width into
    // the same extent, and a single point renders as a dot
    double scl = 0.0;
    if (box_h > 1e-12)
        scl = usable_h / box_h;
    else if (box_w > 1e-12)
        scl = usable_h / box_w;

    const double content_w = box_w * scl;
    std::int64_t width = static_cast<std::int64_t>(std::llround(content_w)) + 2 * margin + 1;
    width = std::max<std::int64_t>(16, (width + 15) / 16 * 16);

    std::vector<std::uint8_t> image(static_cast<std::size_t>(width * height), 0);
    const double offset_x = (static_cast<double>(width) - content_w) / 2.0;
    const double offset_y = margin + (usable_h - box_h * scl) / 2.0;

    auto to_pixel = [&](const InkPoint& p) {
        const std::int64_t px = static_cast<std::int64_t>(std::llround(offset_x + (p.x - xmin) * scl));
        const std::int64_t py = static_cast<std::int64_t>(std::llround(offset_y + (p.y - ymin) * scl));
        return std::pair<std::int64_t, std::int64_t>{px, py};
    };

    for (const InkTrace& trace : doc.traces) {
        auto [px, py] = to_pixel(trace[0]);
        if (trace.size() == 1) {
            draw_segment(image, width, height, px, py, px, py, stroke_width);
            continue;
        }
        for (std::size_t i = 1; i < trace.size(); ++i) {
            auto [qx, qy] = to_pixel(trace[i]);
            draw_segment(image, width, height, px, py, qx, qy, stroke_width);
            px = qx;
            py = qy;
        }
    }

    std::vector<double> values(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) values[i] = image[i] ? 1.0 : 0.0;
    return Tensor::from_data({1, height, width}, std::move(values));
}

}  // namespace dbgi
