#pragma once

#include <stdexcept>
#include <string>

namespace emg2text {

// Base class for all library errors. The CLI maps ParamError to exit
// code 1 (usage) and everything else to exit code 2 (data).
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents: bad magic, bad section structure, short payload.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Structurally valid input with unusable values: non-finite samples,
// non-PD matrices, infeasible CTC alignments, NaN losses.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Caller passed an out-of-contract argument (bad cutoff, bad range,
// dimension mismatch, empty input where non-empty is required).
struct ParamError : Error {
  explicit ParamError(const std::string& msg) : Error(msg) {}
};

// A symbol is not a member of the active phoneme inventory.
struct VocabError : Error {
  explicit VocabError(const std::string& msg) : Error(msg) {}
};

}  // namespace emg2text
