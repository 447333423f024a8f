// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/cli.hpp"

int main(int argc, char** argv) { return modalbridge::cli::main(argc, argv); }
