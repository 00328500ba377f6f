#pragma once

#include "axnn/tensor.hpp"

namespace axnn {

// SGD with classical momentum and L2 weight decay:
//   v <- momentum*v + g + wd*p;  p <- p - lr*v
struct Sgd {
    float lr = 0.01f;
    float momentum = 0.0f;
    float weight_decay = 0.0f;
    std::vector<Tensor> velocity;  // one buffer per parameter, lazily sized

    void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
        if (lr <= 0.0f) throw std::invalid_argument("sgd_step: lr must be > 0");
        if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: params/grads size mismatch");
        if (velocity.empty()) velocity.resize(params.size());
        if (velocity.size() != params.size()) throw std::invalid_argument("sgd_step: parameter count changed");
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            if (g.shape != p.shape)
                throw std::invalid_argument("sgd_step: grad shape " + shape_str(g.shape) + " vs param " +
                                            shape_str(p.shape));
            for (float v : g.data)
                if (!std::isfinite(v))
                    throw std::runtime_error("sgd_step: non-finite gradient, training aborted");
            Tensor& v = velocity[i];
            if (v.empty()) v = Tensor::zeros(p.shape);
            for (int64_t j = 0; j < p.numel(); ++j) {
                v[j] = momentum * v[j] + g[j] + weight_decay * p[j];
                p[j] -= lr * v[j];
            }
        }
    }
};

// One-shot convenience used by the spec-level examples/tests.
inline void sgd_step(Tensor& param, const Tensor& grad, float lr, float momentum, float weight_decay,
                     Tensor& velocity) {
    Sgd opt{lr, momentum, weight_decay};
    if (!velocity.empty()) opt.velocity.push_back(velocity);
    opt.step({&param}, {&grad});
    velocity = opt.velocity[0];
}

}  // namespace axnn
