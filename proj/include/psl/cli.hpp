#pragma once

namespace psl {

/// Full command-line entry point (gen-data / train-cls / train-seg / eval /
/// report). Exit codes: 0 success, 1 config error, 2 I/O error, 3 training
/// divergence.
int run_cli(int argc, const char* const* argv);

}  // namespace psl
