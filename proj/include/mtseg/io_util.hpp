#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mtseg::io {

// Little-endian binary primitives for the checkpoint format.
void write_u16(std::ostream& os, uint16_t v);
void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_f32_array(std::ostream& os, const float* p, size_t count);

// Readers throw DataError on truncation.
uint16_t read_u16(std::istream& is, const char* what);
uint32_t read_u32(std::istream& is, const char* what);
uint64_t read_u64(std::istream& is, const char* what);
float read_f32(std::istream& is, const char* what);
double read_f64(std::istream& is, const char* what);
void read_f32_array(std::istream& is, float* p, size_t count, const char* what);

// Shortest decimal form that parses back to the identical value.
std::string format_float(double v);

double parse_double(std::string_view s, const char* what);
int64_t parse_int(std::string_view s, const char* what);

// Write via a temp file + rename so failures never leave partial output.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

std::vector<std::string> split_ws(std::string_view line);

}  // namespace mtseg::io
