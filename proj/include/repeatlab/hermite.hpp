#pragma once

#include "repeatlab/common.hpp"

namespace repeatlab {

// Probabilists' Hermite polynomial He_k(z) via the forward recurrence
// He_{k+1}(z) = z He_k(z) - k He_{k-1}(z), He_0 = 1, He_1 = z.
inline double hermite_he(int k, double z) {
  if (k < 0) throw ConfigError("hermite order must be >= 0");
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = z;
  for (int j = 1; j < k; ++j) {
    double next = z * cur - static_cast<double>(j) * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

}  // namespace repeatlab
