// Copyright 2026 The Brainformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "brainformer/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return brainformer::cli::run(args, std::cout, std::cerr);
}
