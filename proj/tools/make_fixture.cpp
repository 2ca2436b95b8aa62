// Regenerates the synthetic benchmark shipped under data/synthetic/.
#include <iostream>

#include "CLI11.hpp"
#include "clarifyir/error.hpp"
#include "clarifyir/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write the synthetic benchmark files"};
  std::string out = "data/synthetic";
  std::uint64_t seed = clarifyir::kSyntheticSeed;
  app.add_option("--out", out, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    clarifyir::write_synthetic_benchmark(clarifyir::make_synthetic_benchmark(seed), out);
  } catch (const clarifyir::Error& e) {
    std::cerr << clarifyir::error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
