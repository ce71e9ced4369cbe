#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace lff::cli {

/// Exit codes returned by run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Parses argv (argv[0] is the program name) and dispatches to one of
/// gen | solve | train | infer | eval | bench. Every error is reported on
/// `err`; progress and results on `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// The resolved configuration of a subcommand before any config file or flag
/// is applied. Config files must use a subset of these keys.
nlohmann::json default_config(const std::string& command);

}  // namespace lff::cli
