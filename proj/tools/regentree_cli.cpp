#include "regentree/cli.hpp"

int main(int argc, char** argv) { return regentree::dispatch(argc, argv); }
