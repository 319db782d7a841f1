#include "anonymixer/cli.hpp"

int main(int argc, char** argv) { return anonymixer::parse_and_dispatch(argc, argv); }
