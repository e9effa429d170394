#pragma once

#include <boost/multiprecision/cpp_int.hpp>

namespace nillab {

using Int = boost::multiprecision::cpp_int;
using Rat = boost::multiprecision::cpp_rational;

inline double to_double(const Rat& r) { return static_cast<double>(r); }

}  // namespace nillab
