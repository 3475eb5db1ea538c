#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hdp {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// Shortest decimal that parses back to the same value.
std::string fmt_num(double v);
std::string fmt_num(float v);

double parse_double(std::string_view s, std::string_view what);
float parse_float(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);
std::uint64_t parse_u64(std::string_view s, std::string_view what);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_ws(std::string_view line);
std::vector<std::string> split_lines(const std::string& text);

}  // namespace hdp
