#include <string>
#include <vector>

#include "gil/cli.hpp"

int main(int argc, char** argv) {
    return gil::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
