#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace cvrank::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

inline constexpr const char* kConfigEnv = "GEOVLM_CONFIG";

// Parses a key=value config file body. Blank lines and '#' comments are
// ignored; unknown or repeated keys throw ValidationError.
std::map<std::string, std::string> parse_config(std::string_view text, const std::string& source);

// Every key accepted in a config file, with its built-in default.
const std::map<std::string, std::string>& config_defaults();

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// argv[0] is supplied internally.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cvrank::cli
