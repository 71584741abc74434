#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace brainof {

// Finite-difference checks per differentiable module plus the full composed
// pipeline on a tiny configuration. Returns worst relative error per entry.
std::map<std::string, double> run_grad_suite(std::uint64_t seed);

}  // namespace brainof
