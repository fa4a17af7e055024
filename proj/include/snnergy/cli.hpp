#pragma once

namespace snnergy {

// Entry point behind the snnergy binary. Exit codes: 0 success, 2 config or
// usage error, 1 runtime failure.
int cli_main(int argc, const char* const* argv);

}  // namespace snnergy
