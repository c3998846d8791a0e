#include <iostream>

#include "xlmimo/app.hpp"

int main(int argc, char** argv) { return xlmimo::cli::main_entry(argc, argv, std::cout, std::cerr); }
