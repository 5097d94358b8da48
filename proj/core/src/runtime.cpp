#include "exost/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__ on glibc systems

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace exost {

void configure_allocator() {
#if defined(__GLIBC__)
  // glibc caps the mmap threshold at 32 MiB.
  mallopt(M_MMAP_THRESHOLD, 1 << 25);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 1 << 28);
#endif
}

}  // namespace exost
