#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sage {

// 17 significant digits: parses back to the identical double.
std::string format_double(double v);
std::string format_vector(std::span<const double> v, char sep = ' ');
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

// FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace sage
