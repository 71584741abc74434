#pragma once

#include <map>
#include <string>

#include "brainof/ad.hpp"
#include "brainof/rng.hpp"

namespace brainof {

// Named, long-lived parameter Vars. Iteration order is the canonical order
// for clipping, optimizer state and checkpoints.
class ParamStore {
  public:
    ad::Var create(const std::string& name, Tensor init);
    ad::Var gaussian(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                     double stddev = 0.02);
    ad::Var get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    const std::map<std::string, ad::Var>& all() const { return params_; }
    void zero_grad();
    std::size_t scalar_count() const;

  private:
    std::map<std::string, ad::Var> params_;
};

}  // namespace brainof
