#pragma once

#include <string>
#include <vector>

namespace casvid {

// Subcommands: make-data, train-ae, train-base, train-refine, generate,
// refine-only, analyze. Exit codes: 0 ok, 2 config, 3 checkpoint, 4 data,
// 1 unexpected.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace casvid
