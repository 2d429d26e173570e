#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rclab::cli {

inline constexpr const char* kVersion = "1.0.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kStorage = 3;
inline constexpr int kIo = 4;

// args excludes the program name. Results go to --out when given, else to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Multi-word command names, e.g. "traps lambda".
const std::vector<std::string>& command_names();

// Statement each command exercises, with a verbatim anchor quote. Throws UsageError for unknown commands.
std::string describe(const std::string& command);

}  // namespace rclab::cli
