#pragma once

namespace bandgap::cli {

// Entry point of the bandgap-forge tool. Exit code 0 on success, 1 when a
// computation or certificate fails, 2 for usage and configuration errors.
int run(int argc, char** argv);

}  // namespace bandgap::cli
