#pragma once

namespace emg2text {

// Entry point for the emg2text binary. Exit codes: 0 success, 1 usage
// error, 2 data/format error.
int run_cli(int argc, const char* const* argv);

}  // namespace emg2text
