#include <iostream>

#include "eegdann/cli.hpp"

int main(int argc, char** argv) {
    return eegdann::cli::run(argc, argv, std::cout, std::cerr);
}
