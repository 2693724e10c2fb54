#include <cmath>

#include "stagekit/bytes.hpp"
#include "stagekit/taskflow.hpp"

namespace stagekit::taskflow {

namespace {

// Maps a u64 to [lo, hi).
double scale(uint64_t w, double lo, double hi) {
  double u = static_cast<double>(w >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

}  // namespace

FitResult fit_kernel(const Digest& input_digest, uint64_t row) {
  // Coefficients come from hashing (staged digest, row), so the result
  // genuinely depends on the staged bytes.
  Bytes seed_material(input_digest.bytes.begin(), input_digest.bytes.end());
  put_u64le(seed_material, row);
  Digest seed = sha256(seed_material);

  uint64_t w[5];
  for (int i = 0; i < 5; ++i) w[i] = get_u64le(seed.bytes.data() + 8 * i);

  double a4 = scale(w[0], 0.5, 2.0);  // positive leading term keeps it coercive
  double a3 = scale(w[1], -1.0, 1.0);
  double a2 = scale(w[2], -2.0, 2.0);
  double a1 = scale(w[3], -1.0, 1.0);
  double a0 = scale(w[4], -1.0, 1.0);

  auto f = [&](double x) { return (((a4 * x + a3) * x + a2) * x + a1) * x + a0; };

  // Golden-section search on a fixed bracket, fixed iteration count.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -8.0, hi = 8.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < kFitIterations; ++i) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  double x = (lo + hi) / 2.0;
  return FitResult{x, f(x), kFitIterations};
}

}  // namespace stagekit::taskflow
