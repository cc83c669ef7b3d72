#include <iostream>

#include "a2bfr/config.hpp"

int main(int argc, char** argv) { return a2bfr::cli_main(argc, argv); }
