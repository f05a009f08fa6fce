#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "gcvt/fp16.hpp"

using namespace gcv;

namespace {

// Independent reference conversion: decompose x into sign / exponent /
// significand with frexp and round the significand to 11 bits by hand.
float ref_fp16_round(double x) {
  if (std::isnan(x) || std::isinf(x) || x == 0.0) return static_cast<float>(x);
  double ax = std::fabs(x);
  int e;
  double m = std::frexp(ax, &e);  // ax = m * 2^e, m in [0.5, 1)
  int unbiased = e - 1;
  int sig_bits = 10;
  if (unbiased < -14) {
    sig_bits = 10 + (unbiased + 14);  // subnormal: fewer significand bits
    if (sig_bits < -1) return x < 0 ? -0.0f : 0.0f;
  }
  double scale = std::ldexp(1.0, sig_bits + 1);
  double scaled = m * scale;  // in [2^sig_bits, 2^(sig_bits+1))
  double fl = std::floor(scaled);
  double frac = scaled - fl;
  double rounded;
  if (frac > 0.5) rounded = fl + 1.0;
  else if (frac < 0.5) rounded = fl;
  else rounded = (std::fmod(fl, 2.0) == 0.0) ? fl : fl + 1.0;
  double res = std::ldexp(rounded / scale, e);
  if (res > 65504.0) return x < 0 ? -INFINITY : INFINITY;
  return static_cast<float>(x < 0 ? -res : res);
}

}  // namespace

TEST_CASE("fp16_round basics") {
  CHECK(fp16_round(1.0f) == 1.0f);
  CHECK(fp16_round(0.0f) == 0.0f);
  CHECK(std::signbit(fp16_round(-0.0f)));
  CHECK(fp16_round(2049.0f) == 2048.0f);  // 11-bit significand
  CHECK(fp16_round(65520.0f) == INFINITY);
  CHECK(fp16_round(-65520.0f) == -INFINITY);
  CHECK(fp16_round(65504.0f) == 65504.0f);  // largest finite
}

TEST_CASE("fp16_round ties to even") {
  // 2049 is exactly halfway between 2048 and 2050; even wins.
  CHECK(fp16_round(2049.0f) == 2048.0f);
  CHECK(fp16_round(2051.0f) == 2052.0f);
  // Halfway in the subnormal range.
  float min_sub = std::ldexp(1.0f, -24);
  CHECK(fp16_round(min_sub * 0.5f) == 0.0f);         // tie to even (0)
  CHECK(fp16_round(min_sub * 1.5f) == 2 * min_sub);  // tie to even (2 ulp)
}

TEST_CASE("fp16_round idempotent and monotone vs independent reference") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    uint32_t bits = static_cast<uint32_t>(rng());
    float x;
    std::memcpy(&x, &bits, 4);
    if (std::isnan(x)) continue;
    float r = fp16_round(x);
    CHECK(fp16_round(r) == r);
    float ref = ref_fp16_round(static_cast<double>(x));
    if (r != ref) {
      CAPTURE(x);
      CHECK(r == ref);
    }
  }
  // Monotone on a sorted sample.
  float prev = fp16_round(-70000.0f);
  for (float x = -70000.0f; x < 70000.0f; x += 13.7f) {
    float r = fp16_round(x);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("half bits round-trip every pattern") {
  for (uint32_t h = 0; h < 0x10000; ++h) {
    uint16_t hb = static_cast<uint16_t>(h);
    if ((hb & 0x7fffu) > 0x7c00u) continue;  // NaN payloads not preserved
    float f = float_from_half_bits(hb);
    CHECK(half_bits_from_float(f) == hb);
  }
}

TEST_CASE("ulp distance") {
  CHECK(fp16_ulp_distance(1.0f, 1.0f) == 0);
  float one_ulp = float_from_half_bits(half_bits_from_float(1.0f) + 1);
  CHECK(fp16_ulp_distance(1.0f, one_ulp) == 1);
  CHECK(fp16_ulp_distance(one_ulp, 1.0f) == 1);  // symmetric
  float min_sub = std::ldexp(1.0f, -24);
  CHECK(fp16_ulp_distance(-min_sub, min_sub) == 2);  // crosses zero
  CHECK(fp16_ulp_distance(0.0f, -0.0f) == 0);
}
