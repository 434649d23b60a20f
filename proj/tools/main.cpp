#include <string>
#include <vector>

#include "kinpipe/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return kinpipe::cli::run(args);
}
