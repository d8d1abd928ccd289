#include "dbgi/pgm.hpp"

#include <cctype>
#include <fstream>

#include "dbgi/tensor.hpp"

namespace dbgi {

void write_pgm(const std::string& path, const PgmImage& image) {
    if (static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height)
        throw ContractViolation("pgm: pixel buffer does not match extents");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << image.width << " " << image.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(image.pixels.data()),
             static_cast<std::streamsize>(image.pixels.size()));
    if (!os) throw IoError("write failure: " + path);
}

namespace {

int next_header_value(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments between header fields
    while (true) {
        const int c = is.peek();
        if (c == EOF) throw IoError("truncated PGM header: " + path);
        if (c == '#') {
            std::string comment;
            std::getline(is, comment);
            continue;
        }
        if (std::isspace(c)) {
            is.get();
            continue;
        }
        break;
    }
    int value = 0;
    if (!(is >> value)) throw IoError("malformed PGM header: " + path);
    return value;
}

}  // namespace

PgmImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw IoError("not a P5 PGM: " + path);
    PgmImage image;
    image.width = next_header_value(is, path);
    image.height = next_header_value(is, path);
    const int maxval = next_header_value(is, path);
    if (maxval != 255) throw IoError("unsupported PGM maxval " + std::to_string(maxval) + ": " + path);
    is.get();  // single whitespace after maxval
    image.pixels.resize(static_cast<std::size_t>(image.width * image.height));
    is.read(reinterpret_cast<char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
    if (!is) throw IoError("truncated PGM payload: " + path);
    return image;
}

}  // namespace dbgi
