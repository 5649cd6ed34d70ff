#pragma once

#include <boost/multiprecision/cpp_int.hpp>

namespace rhm {

using BigInt = boost::multiprecision::cpp_int;
using BigRat = boost::multiprecision::cpp_rational;

inline BigInt big_pow(const BigInt& base, unsigned exp) {
    BigInt r = 1;
    for (unsigned i = 0; i < exp; ++i) r *= base;
    return r;
}

inline BigRat big_rat_pow(const BigRat& base, unsigned exp) {
    BigRat r = 1;
    for (unsigned i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace rhm
