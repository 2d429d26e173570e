#include "cli.hpp"

int main(int argc, char** argv) { return rclab::cli::run(argc, argv); }
