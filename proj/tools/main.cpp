#include <iostream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cli.hpp"

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep large activation buffers in the heap instead of mmap/munmap per call.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return ptgan::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
