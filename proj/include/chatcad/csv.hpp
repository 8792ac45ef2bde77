#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace chatcad {

// RFC 4180 style: comma separated, double-quoted fields may contain commas,
// newlines and doubled quotes. Blank lines are skipped.
std::vector<std::vector<std::string>> parseCsv(std::string_view text);

}  // namespace chatcad
