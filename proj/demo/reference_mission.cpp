// Runs the reference mission headless and prints the report.

#include <chrono>
#include <iostream>

#include "lakekeeper/lakekeeper.hpp"

int main(int argc, char** argv) {
  using namespace lakekeeper;
  const auto t0 = std::chrono::steady_clock::now();
  auto mission = run_headless(reference_mission());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << report_to_json(*mission->report()).dump(2) << '\n';
  std::cout << "events: " << mission->events().last_seq() << ", wall time " << secs << " s\n";
  if (argc > 1) write_run_directory(*mission, argv[1]);
}
