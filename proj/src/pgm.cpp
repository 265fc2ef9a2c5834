#include "mtseg/pgm.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "mtseg/errors.hpp"
#include "mtseg/io_util.hpp"

namespace mtseg {

namespace {

std::string header(int width, int height, int maxval) {
    return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n" +
           std::to_string(maxval) + "\n";
}

// Reads the next header token, skipping whitespace and # comments.
int header_int(std::istream& in, const std::filesystem::path& path, const char* what) {
    for (;;) {
        int c = in.peek();
        if (c == EOF) throw DataError(path.string() + ": truncated header before " + what);
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string comment;
            std::getline(in, comment);
        } else {
            break;
        }
    }
    int value = 0;
    if (!(in >> value) || value < 0)
        throw DataError(path.string() + ": malformed " + std::string(what));
    return value;
}

struct PgmHeader {
    int width = 0, height = 0, maxval = 0;
};

PgmHeader read_header(std::istream& in, const std::filesystem::path& path) {
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw DataError(path.string() + ": not a binary PGM (P5) file");
    PgmHeader h;
    h.width = header_int(in, path, "width");
    h.height = header_int(in, path, "height");
    h.maxval = header_int(in, path, "maxval");
    if (h.width < 1 || h.height < 1)
        throw DataError(path.string() + ": bad image dimensions");
    in.get();  // single whitespace byte before the pixel block
    if (!in) throw DataError(path.string() + ": truncated after header");
    return h;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image8& img) {
    std::string out = header(img.width, img.height, 255);
    out.append(reinterpret_cast<const char*>(img.v.data()), img.v.size());
    io::write_file_atomic(path, out);
}

void write_pgm(const std::filesystem::path& path, const Image16& img) {
    std::string out = header(img.width, img.height, 65535);
    out.reserve(out.size() + img.v.size() * 2);
    for (uint16_t d : img.v) {
        out.push_back(char(d >> 8));
        out.push_back(char(d & 0xff));
    }
    io::write_file_atomic(path, out);
}

Image8 read_pgm8(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    auto h = read_header(in, path);
    if (h.maxval < 1 || h.maxval > 255)
        throw DataError(path.string() + ": maxval " + std::to_string(h.maxval) +
                        " is not an 8-bit image");
    Image8 img(h.width, h.height);
    in.read(reinterpret_cast<char*>(img.v.data()), std::streamsize(img.v.size()));
    if (in.gcount() != std::streamsize(img.v.size()))
        throw DataError(path.string() + ": truncated pixel data");
    return img;
}

Image16 read_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    auto h = read_header(in, path);
    if (h.maxval < 256 || h.maxval > 65535)
        throw DataError(path.string() + ": maxval " + std::to_string(h.maxval) +
                        " is not a 16-bit image");
    Image16 img(h.width, h.height);
    std::vector<char> raw(img.v.size() * 2);
    in.read(raw.data(), std::streamsize(raw.size()));
    if (in.gcount() != std::streamsize(raw.size()))
        throw DataError(path.string() + ": truncated pixel data");
    for (size_t i = 0; i < img.v.size(); ++i)
        img.v[i] = uint16_t((uint8_t(raw[2 * i]) << 8) | uint8_t(raw[2 * i + 1]));
    return img;
}

}  // namespace mtseg
