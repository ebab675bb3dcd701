#pragma once

// Command-line front end: gen, eval, iterate and split subcommands.

namespace gvc::cli {

// Exit codes: 0 success, 1 configuration or input error, 2 transport errors
// during generation.
int run(int argc, char** argv);

}  // namespace gvc::cli
