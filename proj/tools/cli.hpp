#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace bpseg::cli {

/// Returns nullptr for unset variables.
using EnvLookup = std::function<const char*(const char*)>;

/// Parses and runs one invocation. Exit status: 0 success, 2 usage or
/// configuration error, 1 runtime failure. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env);

}  // namespace bpseg::cli
