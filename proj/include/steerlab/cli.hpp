#pragma once

#include <string>
#include <vector>

namespace steerlab {

/// `steerlab synth|extract|sweep|fit [flags]`. Returns the process exit code:
/// 0 success, 2 usage, 3 data or compatibility, 4 I/O.
int run_cli(int argc, char** argv);

/// "+1,-1" -> {1, -1}. Throws UsageError.
std::vector<double> parse_multipliers(const std::string& text);
/// "all" -> {} (every layer), "0,3,5" -> {0, 3, 5}. Throws UsageError.
std::vector<std::size_t> parse_layers(const std::string& text);

}  // namespace steerlab
