#include "sface/fd_oracle.hpp"

#include <cmath>

#include "sface/errors.hpp"

namespace sface {

namespace {

double probe(const LossFn& loss_fn, const EmbeddingBatch& batch,
             const CenterMatrix& centers) {
    const double value = loss_fn(batch, centers);
    if (!std::isfinite(value)) {
        throw NonFiniteLoss("fd_grad: probe evaluation is non-finite");
    }
    return value;
}

}  // namespace

void FDConfig::validate() const {
    if (!(step >= 1e-9 && step <= 1e-3)) {
        throw InvalidSpec("FDConfig: step must lie in [1e-9, 1e-3]");
    }
}

FDGrad fd_grad(const LossFn& loss_fn, EmbeddingBatch batch, CenterMatrix centers,
               const FDConfig& cfg) {
    cfg.validate();
    const double h = cfg.step;
    const double inv_2h = 1.0 / (2.0 * h);

    FDGrad out;
    out.grad_x.resize(batch.features.size());
    out.grad_w.resize(centers.data.size());

    for (std::size_t i = 0; i < batch.features.size(); ++i) {
        const double saved = batch.features[i];
        batch.features[i] = saved + h;
        const double plus = probe(loss_fn, batch, centers);
        batch.features[i] = saved - h;
        const double minus = probe(loss_fn, batch, centers);
        batch.features[i] = saved;
        out.grad_x[i] = (plus - minus) * inv_2h;
    }
    for (std::size_t i = 0; i < centers.data.size(); ++i) {
        const double saved = centers.data[i];
        centers.data[i] = saved + h;
        const double plus = probe(loss_fn, batch, centers);
        centers.data[i] = saved - h;
        const double minus = probe(loss_fn, batch, centers);
        centers.data[i] = saved;
        out.grad_w[i] = (plus - minus) * inv_2h;
    }
    return out;
}

}  // namespace sface
