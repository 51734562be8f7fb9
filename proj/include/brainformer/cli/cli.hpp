// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace brainformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitMissingFile = 2;
inline constexpr int kExitInvalid = 3;
inline constexpr int kExitNonFinite = 4;

/// Runs one subcommand. `args` excludes the program name. Results go to
/// `out`; failures print a single "error: ..." line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace brainformer::cli
