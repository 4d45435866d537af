#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sdecade/linalg.hpp"

namespace sdecade {

/// Shortest round-trippable form with 17 significant digits ("%.17g").
std::string format_double(double v);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

/// Parses a double, accepting surrounding whitespace; throws std::invalid_argument.
double parse_double(std::string_view s);

/// One matrix row per line, comma separated.
void write_matrix_csv(std::ostream& os, const Matrix& m);
/// Reads comma-separated rows until EOF, skipping blank and '#' lines.
Matrix read_matrix_csv(std::istream& is);

}  // namespace sdecade
