#pragma once

#include <cstddef>
#include <vector>

namespace brainof {

// Half spectrum of a real sequence of length n: floor(n/2)+1 complex bins.
// Convention: bins[k] = sum_t x[t] * exp(-2*pi*i*k*t/n).
struct Spectrum {
    std::size_t n = 0;
    int axis = 0;  // axis of the source tensor that was transformed
    std::vector<double> re;
    std::vector<double> im;

    std::size_t bins() const { return n / 2 + 1; }
};

// Direct O(n^2) DFT; sequences are short at this scale.
Spectrum rfft(const std::vector<double>& x, int axis = 0);
std::vector<double> irfft(const Spectrum& s);

}  // namespace brainof
