// Copyright (c) 2026, the langarith authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace langarith::detail {

struct ProcessResult {
    /// Exit status, or 128 + signal number when killed by a signal.
    int exit_code = 0;
    std::string stdout_text;
};

/// Runs `command` through /bin/sh -c with `input` on stdin, stdout captured
/// and stderr appended to `stderr_path` (discarded when empty).
ProcessResult run_shell(const std::string& command, std::string_view input, const std::filesystem::path& stderr_path);

/// Single-quotes `s` for POSIX sh.
std::string shell_quote(std::string_view s);

} // namespace langarith::detail
