#include "brainof/fft.hpp"

#include <cmath>

#include "brainof/errors.hpp"

namespace brainof {

Spectrum rfft(const std::vector<double>& x, int axis) {
    const std::size_t n = x.size();
    if (n < 2) throw InputError("rfft: sequence length must be >= 2");
    Spectrum s;
    s.n = n;
    s.axis = axis;
    const std::size_t nb = s.bins();
    s.re.assign(nb, 0.0);
    s.im.assign(nb, 0.0);
    const double w = -2.0 * M_PI / static_cast<double>(n);
    for (std::size_t k = 0; k < nb; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = w * static_cast<double>(k) * static_cast<double>(t);
            re += x[t] * std::cos(a);
            im += x[t] * std::sin(a);
        }
        s.re[k] = re;
        s.im[k] = im;
    }
    // structurally real sequence: DC (and Nyquist for even n) are real
    s.im[0] = 0.0;
    if (n % 2 == 0) s.im[nb - 1] = 0.0;
    return s;
}

std::vector<double> irfft(const Spectrum& s) {
    const std::size_t n = s.n;
    if (n < 2) throw InputError("irfft: spectrum length must be >= 2");
    const std::size_t nb = s.bins();
    std::vector<double> x(n, 0.0);
    const double w = 2.0 * M_PI / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = s.re[0];
        for (std::size_t k = 1; k < nb; ++k) {
            const double a = w * static_cast<double>(k) * static_cast<double>(t);
            const double term = s.re[k] * std::cos(a) - s.im[k] * std::sin(a);
            const bool nyquist = (n % 2 == 0) && (k == nb - 1);
            acc += (nyquist ? 1.0 : 2.0) * term;
        }
        x[t] = acc / static_cast<double>(n);
    }
    return x;
}

}  // namespace brainof
