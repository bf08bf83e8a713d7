#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace cfdist::cli {

struct Invocation {
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    unsigned threads = 1;
};

/// Runs one subcommand and returns the process exit code: 0 success,
/// 2 configuration error, 3 data error, 4 numerical failure.
int run(const Invocation& invocation, std::ostream& log);

/// Same as `run`, with the config given as text; errors propagate as exceptions.
/// Returns the paths of the files written.
std::vector<std::string> execute(const std::string& command, const std::string& config_text,
                                 const Invocation& overrides);

int exit_code_for(const std::exception& error);

} // namespace cfdist::cli
