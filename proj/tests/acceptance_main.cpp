#include <iostream>
#include <string>
#include <vector>

#include "chemolb/app.hpp"

// Runs every acceptance criterion, or the ids given on the command line.
int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::stoi(argv[i]));
  if (ids.empty()) ids = chemolb::app::suite_criteria("all");
  const auto results = chemolb::app::run_criteria(ids, std::cout);
  int failed = 0;
  for (const auto& r : results) failed += r.pass ? 0 : 1;
  std::cout << (failed == 0 ? "acceptance: all criteria passed\n" : "acceptance: " + std::to_string(failed) + " failed\n");
  return failed == 0 ? 0 : 1;
}
