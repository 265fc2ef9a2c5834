#include "mtseg/io_util.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "mtseg/errors.hpp"

namespace mtseg::io {

namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
    char buf[sizeof(U)];
    for (size_t i = 0; i < sizeof(U); ++i) buf[i] = char((v >> (8 * i)) & 0xff);
    os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is, const char* what) {
    char buf[sizeof(U)];
    if (!is.read(buf, sizeof(U)))
        throw DataError(std::string("truncated file while reading ") + what);
    U v = 0;
    for (size_t i = 0; i < sizeof(U); ++i) v |= U(uint8_t(buf[i])) << (8 * i);
    return v;
}

}  // namespace

void write_u16(std::ostream& os, uint16_t v) { put_le(os, v); }
void write_u32(std::ostream& os, uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, uint64_t v) { put_le(os, v); }
void write_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<uint32_t>(v)); }
void write_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<uint64_t>(v)); }

void write_f32_array(std::ostream& os, const float* p, size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(p), std::streamsize(count * 4));
    } else {
        for (size_t i = 0; i < count; ++i) write_f32(os, p[i]);
    }
}

uint16_t read_u16(std::istream& is, const char* what) { return get_le<uint16_t>(is, what); }
uint32_t read_u32(std::istream& is, const char* what) { return get_le<uint32_t>(is, what); }
uint64_t read_u64(std::istream& is, const char* what) { return get_le<uint64_t>(is, what); }
float read_f32(std::istream& is, const char* what) {
    return std::bit_cast<float>(get_le<uint32_t>(is, what));
}
double read_f64(std::istream& is, const char* what) {
    return std::bit_cast<double>(get_le<uint64_t>(is, what));
}

void read_f32_array(std::istream& is, float* p, size_t count, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(p), std::streamsize(count * 4)))
            throw DataError(std::string("truncated file while reading ") + what);
    } else {
        for (size_t i = 0; i < count; ++i) p[i] = read_f32(is, what);
    }
}

std::string format_float(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw NumericalError("float formatting failed");
    return std::string(buf, end);
}

double parse_double(std::string_view s, const char* what) {
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw DataError(std::string("bad numeric value '") + std::string(s) + "' for " + what);
    return v;
}

int64_t parse_int(std::string_view s, const char* what) {
    int64_t v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw DataError(std::string("bad integer value '") + std::string(s) + "' for " + what);
    return v;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open for writing: " + tmp.string());
        os.write(content.data(), std::streamsize(content.size()));
        if (!os) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<std::string> split_ws(std::string_view line) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace mtseg::io
