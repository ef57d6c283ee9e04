#pragma once

#include <cstdint>
#include <string>

namespace nrr::io {

// Decimal text with 17 significant digits; round-trips any finite double
// exactly and is locale-independent.
std::string format_double17(double v);

// Shortest representation that still round-trips; used for CSV cells.
std::string format_double(double v);

std::string fnv1a64_hex(const std::string& bytes);

// Write-to-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

}  // namespace nrr::io
