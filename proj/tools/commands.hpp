#ifndef BAE_TOOLS_COMMANDS_HPP
#define BAE_TOOLS_COMMANDS_HPP

#include <ostream>
#include <string>
#include <vector>

namespace bae::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Runs the command line `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bae::cli

#endif  // BAE_TOOLS_COMMANDS_HPP
