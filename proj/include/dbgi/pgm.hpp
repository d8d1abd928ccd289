#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dbgi {

struct PgmImage {
    std::int64_t width = 0;
    std::int64_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

void write_pgm(const std::string& path, const PgmImage& image);
PgmImage read_pgm(const std::string& path);

}  // namespace dbgi
