#pragma once

#include <string>
#include <string_view>

namespace psse {

std::string sha256_hex(std::string_view data);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view token);

}  // namespace psse
