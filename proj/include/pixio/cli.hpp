#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pixio {

/// Runs one `pixio <command> [options]` invocation. Returns the process exit
/// code; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Keeps freed heap memory mapped between training steps. The tape allocates
/// and frees the same large buffers every step; with default glibc settings
/// each step pays for sbrk trims and fresh mmaps. No-op off glibc.
void tune_allocator();

int cli_main(int argc, char** argv);

}  // namespace pixio
