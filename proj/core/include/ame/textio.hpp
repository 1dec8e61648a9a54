#pragma once

#include <string>

namespace ame {

/// Fixed "%.12g" rendering so CSV output is byte-stable across runs.
std::string format_double(double v);

std::string read_text_file(const std::string& path);  // throws InvalidArgument
void write_text_file(const std::string& path, const std::string& content);

}  // namespace ame
