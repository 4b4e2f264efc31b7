#pragma once

#include <cstddef>

// Elementwise transcendental kernels over contiguous double arrays.
// Backed by glibc libmvec when available, std:: otherwise.
namespace functa::vmath {

void sin(const double* in, double* out, std::size_t n);
void cos(const double* in, double* out, std::size_t n);
void exp(const double* in, double* out, std::size_t n);

}  // namespace functa::vmath
