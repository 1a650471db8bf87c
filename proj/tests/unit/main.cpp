#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "hcustom/log.hpp"

int main(int argc, char** argv) {
  hcustom::log::set_enabled(false);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
