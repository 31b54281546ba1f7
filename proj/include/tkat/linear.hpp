#pragma once

#include <string>

#include "tkat/rng.hpp"
#include "tkat/tensor.hpp"

namespace tkat {

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

// Affine map y = x . W^T + b with W stored [out, in].
struct Linear {
    int in_dim = 0;
    int out_dim = 0;
    Tensor w;  // [out, in]
    Tensor b;  // [out]

    Linear() = default;
    Linear(int in, int out, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [batch, in] -> [batch, out]

    void visit_params(const std::string& prefix, const ParamVisitor& v) {
        v(prefix + ".w", w);
        v(prefix + ".b", b);
    }
};

Tensor glorot_uniform(Shape shape, int fan_in, int fan_out, Rng& rng);

}  // namespace tkat
