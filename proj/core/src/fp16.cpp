#include "gcvt/fp16.hpp"

#include <cstdlib>
#include <cmath>
#include <cstring>

namespace gcv {

uint16_t half_bits_from_float(float x) {
  uint32_t f;
  std::memcpy(&f, &x, sizeof(f));

  const uint32_t sign = (f >> 16) & 0x8000u;
  const uint32_t abs = f & 0x7fffffffu;

  if (abs >= 0x7f800000u) {
    // Inf or NaN. Keep a quiet NaN payload bit so NaN stays NaN.
    if (abs > 0x7f800000u) return static_cast<uint16_t>(sign | 0x7e00u);
    return static_cast<uint16_t>(sign | 0x7c00u);
  }
  if (abs >= 0x47800000u) {
    // >= 65536: overflows binary16 after rounding (max finite is 65504).
    return static_cast<uint16_t>(sign | 0x7c00u);
  }
  if (abs >= 0x38800000u) {
    // Normal half range. Drop 13 mantissa bits with round-to-nearest-even.
    uint32_t v = abs - 0x38000000u;  // rebias 127 -> 15
    uint32_t rounded = (v + 0xfffu + ((v >> 13) & 1u)) >> 13;
    if (rounded == 0x7c00u) return static_cast<uint16_t>(sign | 0x7c00u);
    return static_cast<uint16_t>(sign | rounded);
  }
  if (abs >= 0x33000000u) {
    // Subnormal half range (includes values rounding up to the smallest
    // subnormal). Shift depends on the exponent.
    uint32_t exp = abs >> 23;
    uint32_t mant = (abs & 0x7fffffu) | 0x800000u;
    uint32_t shift = 126u - exp;  // bits to discard; result unit is 2^-24
    uint32_t kept = mant >> shift;
    uint32_t rem = mant & ((1u << shift) - 1u);
    uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (kept & 1u))) kept += 1;
    return static_cast<uint16_t>(sign | kept);
  }
  // Rounds to zero; preserve the sign of zero.
  return static_cast<uint16_t>(sign);
}

float float_from_half_bits(uint16_t h) {
  const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
  const uint32_t exp = (h >> 10) & 0x1fu;
  const uint32_t mant = h & 0x3ffu;
  uint32_t f;
  if (exp == 0x1fu) {
    f = sign | 0x7f800000u | (mant << 13);
  } else if (exp == 0) {
    if (mant == 0) {
      f = sign;
    } else {
      // Normalize the subnormal.
      uint32_t m = mant;
      int e = -1;
      do {
        m <<= 1;
        ++e;
      } while ((m & 0x400u) == 0);
      f = sign | ((127 - 15 - e) << 23) | ((m & 0x3ffu) << 13);
    }
  } else {
    f = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  float out;
  std::memcpy(&out, &f, sizeof(out));
  return out;
}

float fp16_round(float x) { return float_from_half_bits(half_bits_from_float(x)); }

double fp16_round(double x) {
  // The accumulation paths work in 32-bit floats, so the narrowing to
  // float here matches the numeric contract.
  return static_cast<double>(fp16_round(static_cast<float>(x)));
}

int32_t half_bits_ordered(uint16_t h) {
  int32_t v = static_cast<int32_t>(h & 0x7fffu);
  return (h & 0x8000u) ? -v : v;
}

int64_t fp16_ulp_distance(float a, float b) {
  const uint16_t ha = half_bits_from_float(a);
  const uint16_t hb = half_bits_from_float(b);
  const bool nan_a = (ha & 0x7fffu) > 0x7c00u;
  const bool nan_b = (hb & 0x7fffu) > 0x7c00u;
  if (nan_a || nan_b) return (nan_a && nan_b) ? 0 : INT64_MAX;
  return std::llabs(static_cast<int64_t>(half_bits_ordered(ha)) -
                    static_cast<int64_t>(half_bits_ordered(hb)));
}

}  // namespace gcv
