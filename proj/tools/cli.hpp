/*
 * Copyright 2026 The MARS Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MARS_TOOLS_CLI_HPP_
#define MARS_TOOLS_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace mars::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitMismatch = 2;  // also identifiability failures
inline constexpr int kExitFitFailure = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitInternal = 1;

// Runs the command line `args` (args[0] is the program name) and returns the
// process exit code. Human-readable output goes to `out`, diagnostics to
// `err`.
int Run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace mars::cli

#endif  // MARS_TOOLS_CLI_HPP_
