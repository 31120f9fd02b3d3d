#pragma once

namespace gcate {

/// Runs one `gcate` invocation. Returns 0 on success or help, 2 on a usage
/// error, 1 on a runtime error.
int parse_and_dispatch(int argc, char** argv);

}  // namespace gcate
