#include <malloc.h>

#include "resq/cli/commands.hpp"

int main(int argc, char** argv) {
  // Keep large tensor buffers on the heap instead of mapping them per step.
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  return resq::cli::run_cli(argc, argv);
}
