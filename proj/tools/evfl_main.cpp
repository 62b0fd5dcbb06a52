// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "evfl/cli.hpp"

int main(int argc, char** argv) {
  return evfl::cli::dispatch(argc, argv, std::cout, std::cerr);
}
