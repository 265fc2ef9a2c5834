#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

// Binary PGM (P5). 8-bit images carry label maps; 16-bit images carry depth
// in millimeters with big-endian samples as the format requires.

namespace mtseg {

struct Image8 {
    int width = 0, height = 0;
    std::vector<uint8_t> v;

    Image8() = default;
    Image8(int w, int h) : width(w), height(h), v(size_t(w) * size_t(h), 0) {}
    uint8_t& at(int y, int x) { return v[size_t(y) * width + x]; }
    uint8_t at(int y, int x) const { return v[size_t(y) * width + x]; }
};

struct Image16 {
    int width = 0, height = 0;
    std::vector<uint16_t> v;

    Image16() = default;
    Image16(int w, int h) : width(w), height(h), v(size_t(w) * size_t(h), 0) {}
    uint16_t& at(int y, int x) { return v[size_t(y) * width + x]; }
    uint16_t at(int y, int x) const { return v[size_t(y) * width + x]; }
};

void write_pgm(const std::filesystem::path& path, const Image8& img);
void write_pgm(const std::filesystem::path& path, const Image16& img);

// Throws DataError on bad magic, malformed header, maxval outside the
// sample width, or truncated pixel data. Comments (#) are tolerated.
Image8 read_pgm8(const std::filesystem::path& path);
Image16 read_pgm16(const std::filesystem::path& path);

}  // namespace mtseg
