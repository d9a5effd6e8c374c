#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "esm/grid.hpp"

namespace esm {

// 8-bit gray value of a belief in [-1, 1]: round(255 * (v + 1) / 2).
std::uint8_t belief_to_gray(double v);

// Binary PGM (P5, maxval 255); grid row 0 is the first image row.
void write_pgm(const std::string& path, const Grid& belief);
std::string encode_pgm(const Grid& belief);
// Decoded gray levels (0..255) as doubles.
Grid read_pgm(const std::string& path);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// RFC-4180 field quoting.
std::string csv_field(const std::string& s);

void write_grid_csv(const std::string& path, const Grid& grid);
Grid read_grid_csv(const std::string& path);

// Splits a CSV file into rows of fields (quoted fields supported); the
// header row is returned as the first row.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace esm
