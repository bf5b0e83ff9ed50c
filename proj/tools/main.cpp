#include <string>
#include <vector>

#include "casvid/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return casvid::cli_dispatch(args);
}
