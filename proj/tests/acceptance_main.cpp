// One line per acceptance criterion; exits nonzero if any fails.

#include <cstdlib>
#include <iostream>

#include "xlmimo/acceptance.hpp"

int main(int argc, char** argv) {
  xlmimo::acceptance::Options o;
  if (argc > 1) o.trials = std::atoi(argv[1]);
  if (o.trials < 1) {
    std::cerr << "usage: xlmimo_acceptance [trials]\n";
    return 2;
  }
  int failed = 0;
  xlmimo::acceptance::run_all(o, [&](const xlmimo::acceptance::Result& r) {
    std::cout << xlmimo::acceptance::format_line(r) << std::endl;
    failed += r.pass ? 0 : 1;
  });
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
