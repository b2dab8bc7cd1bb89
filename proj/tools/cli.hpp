#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace comkd::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::size_t edit_distance(std::string_view a, std::string_view b);
// Closest candidate by edit distance, or empty when nothing is near.
std::string suggest(std::string_view given, const std::vector<std::string>& candidates);

}  // namespace comkd::cli
