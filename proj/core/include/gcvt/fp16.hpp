#pragma once

#include <cstdint>

namespace gcv {

// IEEE-754 binary16 conversion helpers. Values are stored in the rest of
// the code base as floats that are exactly representable in binary16;
// these routines are the single place where rounding happens.

// Round-to-nearest-even conversion of a float to binary16 bits.
// Handles subnormals, signed zero, overflow to +/-inf, and NaN.
uint16_t half_bits_from_float(float x);

float float_from_half_bits(uint16_t h);

// Nearest binary16 value of x (ties to even). Idempotent and monotone.
float fp16_round(float x);
double fp16_round(double x);

// Orders binary16 bit patterns on a number line so that ULP distance is
// a plain integer difference. NaNs compare equal to themselves only.
int32_t half_bits_ordered(uint16_t h);

// ULP distance between two binary16-representable values.
int64_t fp16_ulp_distance(float a, float b);

}  // namespace gcv
