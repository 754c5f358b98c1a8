#include "lqsadp/cli.hpp"

int main(int argc, char** argv) { return lqsadp::cli::run(argc, argv); }
