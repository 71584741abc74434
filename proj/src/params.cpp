#include "brainof/params.hpp"

#include "brainof/errors.hpp"

namespace brainof {

ad::Var ParamStore::create(const std::string& name, Tensor init) {
    if (params_.count(name)) throw ConfigError("param already registered: " + name);
    auto v = ad::param(std::move(init));
    params_[name] = v;
    return v;
}

ad::Var ParamStore::gaussian(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                             double stddev) {
    Tensor t(shape);
    for (double& v : t.data) v = rng.normal(0.0, stddev);
    return create(name, std::move(t));
}

ad::Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown param: " + name);
    return it->second;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : params_)
        std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : params_) n += v->value.numel();
    return n;
}

}  // namespace brainof
