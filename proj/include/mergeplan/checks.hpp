#pragma once

#include <cstdio>
#include <cstdlib>

// Invariant checks that stay active in optimized test builds. Define
// MERGEPLAN_DEBUG_CHECKS on a target to enable them; library consumers get
// zero overhead by default.
#ifdef MERGEPLAN_DEBUG_CHECKS
#define MERGEPLAN_CHECK(cond, msg)                                                  \
  do {                                                                              \
    if (!(cond)) {                                                                  \
      std::fprintf(stderr, "invariant violated at %s:%d: %s\n", __FILE__, __LINE__, \
                   (msg));                                                          \
      std::abort();                                                                 \
    }                                                                               \
  } while (0)
#else
#define MERGEPLAN_CHECK(cond, msg) ((void)0)
#endif
