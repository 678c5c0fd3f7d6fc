#include <string>
#include <vector>

#include "fmpn/cli.hpp"

int main(int argc, char** argv) {
    return fmpn::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
