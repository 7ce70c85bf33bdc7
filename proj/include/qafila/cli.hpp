#ifndef QAFILA_CLI_HPP
#define QAFILA_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace qafila {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int validation = 1;
inline constexpr int transport = 2;
inline constexpr int partial = 3;
}  // namespace exit_code

/// Runs the qafila command line. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qafila

#endif  // QAFILA_CLI_HPP
