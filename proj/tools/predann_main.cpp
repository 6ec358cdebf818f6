#include <string>
#include <vector>

#include "predann/cli.hpp"

int main(int argc, char** argv) {
    return predann::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
