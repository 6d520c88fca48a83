#ifndef BALANCELAB_CLI_HPP
#define BALANCELAB_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace balancelab {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;   // bad flags / malformed invocation
inline constexpr int kExitData = 3;    // malformed input file or record
inline constexpr int kExitDomain = 4;  // numerically invalid request

// Run the CLI against explicit streams. argv excludes the program name.
// Never throws: errors are mapped to the exit codes above with a one-line
// message on `err`.
int run_cli(const std::vector<std::string>& argv, std::istream& in,
            std::ostream& out, std::ostream& err);

}  // namespace balancelab

#endif
