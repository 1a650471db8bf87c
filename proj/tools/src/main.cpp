#include "hcustom/harness.hpp"

int main(int argc, char** argv) { return hcustom::harness::run(argc, argv); }
