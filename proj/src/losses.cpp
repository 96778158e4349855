// SPDX-License-Identifier: Apache-2.0
#include "bseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bseg::losses {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::dice: return "dice";
        case LossKind::weighted_dice: return "weighted_dice";
        case LossKind::tversky: return "tversky";
        case LossKind::focal_tversky: return "focal_tversky";
    }
    return "dice";
}

LossKind loss_kind_from_string(const std::string& name) {
    for (auto k : {LossKind::dice, LossKind::weighted_dice, LossKind::tversky,
                   LossKind::focal_tversky}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown loss kind '" + name +
                                "' (expected dice, weighted_dice, tversky or focal_tversky)");
}

void validate(const LossConfig& c) {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!(c.epsilon >= 0.0)) throw std::invalid_argument("loss.epsilon must be >= 0");
    if (c.kind == LossKind::tversky || c.kind == LossKind::focal_tversky) {
        if (!unit(c.alpha)) throw std::invalid_argument("loss.alpha must lie in [0, 1]");
        if (!unit(c.beta)) throw std::invalid_argument("loss.beta must lie in [0, 1]");
        if (std::abs(c.alpha + c.beta - 1.0) > 1e-12) {
            throw std::invalid_argument("loss.alpha + loss.beta must equal 1");
        }
    }
    if (c.kind == LossKind::focal_tversky && !(c.gamma >= 1.0)) {
        throw std::invalid_argument("loss.gamma must be >= 1");
    }
    if (c.kind == LossKind::weighted_dice) {
        if (!(c.weight_background >= 0.0) || !(c.weight_building >= 0.0)) {
            throw std::invalid_argument("loss.class_weights must be non-negative");
        }
        if (c.weight_background + c.weight_building <= 0.0) {
            throw std::invalid_argument("loss.class_weights must not both be zero");
        }
    }
}

namespace {

void check_shapes(std::span<const double> p, std::span<const double> g) {
    if (p.size() != g.size()) {
        throw std::invalid_argument("loss: prediction has " + std::to_string(p.size()) +
                                    " elements, target has " + std::to_string(g.size()));
    }
}

double ratio(double num, double den) {
    if (den == 0.0) throw std::domain_error("loss: zero denominator (epsilon = 0 on empty input)");
    return num / den;
}

// Dice loss of (p, g), or of (1 - p, 1 - g) when `complement`; adds scale * dL/dp to grad.
double dice_terms(std::span<const double> p, std::span<const double> g, double eps,
                  bool complement, double scale, double* grad) {
    double spg = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = complement ? 1.0 - p[i] : p[i];
        const double gi = complement ? 1.0 - g[i] : g[i];
        spg += pi * gi;
        sp += pi;
        sg += gi;
    }
    const double num = 2.0 * spg + eps;
    const double den = sp + sg + eps;
    const double loss = 1.0 - ratio(num, den);
    if (grad != nullptr) {
        const double den2 = den * den;
        const double sign = complement ? -1.0 : 1.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = complement ? 1.0 - g[i] : g[i];
            grad[i] += scale * sign * -(2.0 * gi * den - num) / den2;
        }
    }
    return loss;
}

// Tversky index; adds scale * dTI/dp to grad.
double tversky_terms(std::span<const double> p, std::span<const double> g, double alpha,
                     double beta, double eps, double scale, double* grad) {
    double a = 0.0, b = 0.0, c = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        a += p[i] * g[i];
        b += p[i] * (1.0 - g[i]);
        c += (1.0 - p[i]) * g[i];
    }
    const double num = a + eps;
    const double den = a + alpha * b + beta * c + eps;
    const double ti = ratio(num, den);
    if (grad != nullptr) {
        const double den2 = den * den;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double dnum = g[i];
            const double dden = g[i] + alpha * (1.0 - g[i]) - beta * g[i];
            grad[i] += scale * (dnum * den - num * dden) / den2;
        }
    }
    return ti;
}

double focal_power(double base, double gamma) {
    return gamma == 1.0 ? base : std::pow(base, 1.0 / gamma);
}

double chunk_loss(const LossConfig& c, std::span<const double> p, std::span<const double> g,
                  double scale, double* grad) {
    switch (c.kind) {
        case LossKind::dice: return dice_terms(p, g, c.epsilon, false, scale, grad);
        case LossKind::weighted_dice: {
            const double total = c.weight_background + c.weight_building;
            const double wb = c.weight_building / total;
            const double wbg = c.weight_background / total;
            const double lb = dice_terms(p, g, c.epsilon, false, scale * wb, grad);
            const double lbg = dice_terms(p, g, c.epsilon, true, scale * wbg, grad);
            return (c.weight_building * lb + c.weight_background * lbg) / total;
        }
        case LossKind::tversky:
            return 1.0 - tversky_terms(p, g, c.alpha, c.beta, c.epsilon, -scale, grad);
        case LossKind::focal_tversky: {
            const double ti = tversky_terms(p, g, c.alpha, c.beta, c.epsilon, 0.0, nullptr);
            const double base = 1.0 - ti;
            if (grad != nullptr && base > 0.0) {
                // dL/dTI = -(1/gamma) (1 - TI)^(1/gamma - 1)
                const double outer =
                    c.gamma == 1.0 ? -1.0 : -(1.0 / c.gamma) * std::pow(base, 1.0 / c.gamma - 1.0);
                tversky_terms(p, g, c.alpha, c.beta, c.epsilon, scale * outer, grad);
            }
            return focal_power(base, c.gamma);
        }
    }
    return 0.0;
}

}  // namespace

double dice_loss(std::span<const double> p, std::span<const double> g, double epsilon) {
    check_shapes(p, g);
    return dice_terms(p, g, epsilon, false, 0.0, nullptr);
}

double weighted_dice_loss(std::span<const double> p, std::span<const double> g,
                          double weight_background, double weight_building, double epsilon) {
    check_shapes(p, g);
    LossConfig c;
    c.kind = LossKind::weighted_dice;
    c.weight_background = weight_background;
    c.weight_building = weight_building;
    c.epsilon = epsilon;
    validate(c);
    return chunk_loss(c, p, g, 0.0, nullptr);
}

double tversky_index(std::span<const double> p, std::span<const double> g, double alpha,
                     double beta, double epsilon) {
    check_shapes(p, g);
    return tversky_terms(p, g, alpha, beta, epsilon, 0.0, nullptr);
}

double tversky_loss(std::span<const double> p, std::span<const double> g, double alpha,
                    double beta, double epsilon) {
    LossConfig c;
    c.kind = LossKind::tversky;
    c.alpha = alpha;
    c.beta = beta;
    c.epsilon = epsilon;
    validate(c);
    check_shapes(p, g);
    return chunk_loss(c, p, g, 0.0, nullptr);
}

double focal_tversky_loss(std::span<const double> p, std::span<const double> g, double alpha,
                          double beta, double gamma, double epsilon) {
    LossConfig c;
    c.kind = LossKind::focal_tversky;
    c.alpha = alpha;
    c.beta = beta;
    c.gamma = gamma;
    c.epsilon = epsilon;
    validate(c);
    check_shapes(p, g);
    return chunk_loss(c, p, g, 0.0, nullptr);
}

LossValue evaluate(const LossConfig& config, std::span<const double> p, std::span<const double> g,
                   int images) {
    validate(config);
    check_shapes(p, g);
    LossValue out;
    out.grad.assign(p.size(), 0.0);
    if (!config.per_image || images <= 1) {
        out.value = chunk_loss(config, p, g, 1.0, out.grad.data());
        return out;
    }
    if (p.size() % static_cast<std::size_t>(images) != 0) {
        throw std::invalid_argument("loss: element count not divisible by image count");
    }
    const std::size_t chunk = p.size() / static_cast<std::size_t>(images);
    const double scale = 1.0 / images;
    double total = 0.0;
    for (int n = 0; n < images; ++n) {
        const std::size_t off = static_cast<std::size_t>(n) * chunk;
        total += chunk_loss(config, p.subspan(off, chunk), g.subspan(off, chunk), scale,
                            out.grad.data() + off);
    }
    out.value = total / images;
    return out;
}

double check_gradients(const LossConfig& config, std::span<const double> p,
                       std::span<const double> g, double step) {
    const LossValue analytic = evaluate(config, p, g);
    std::vector<double> probe(p.begin(), p.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double keep = probe[i];
        probe[i] = keep + step;
        const double up = evaluate(config, probe, g).value;
        probe[i] = keep - step;
        const double down = evaluate(config, probe, g).value;
        probe[i] = keep;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic.grad[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

std::vector<double> projected_gradient(std::span<const double> grad, std::span<const double> p) {
    check_shapes(grad, p);
    std::vector<double> out(grad.begin(), grad.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if ((p[i] <= 0.0 && out[i] > 0.0) || (p[i] >= 1.0 && out[i] < 0.0)) out[i] = 0.0;
    }
    return out;
}

nn::Var loss_node(const nn::Var& probs, const nn::Tensor& target, const LossConfig& config,
                  double* exact_value) {
    const nn::Tensor& pv = probs->value;
    if (pv.numel() != target.numel()) {
        throw std::invalid_argument("loss: prediction " + nn::to_string(pv.shape()) +
                                    " vs target " + nn::to_string(target.shape()));
    }
    std::vector<double> p(pv.values().begin(), pv.values().end());
    std::vector<double> g(target.values().begin(), target.values().end());
    LossValue lv = evaluate(config, p, g, pv.shape().n);
    if (exact_value != nullptr) *exact_value = lv.value;
    auto grad = std::make_shared<std::vector<double>>(std::move(lv.grad));
    nn::Node* pn = probs.get();
    return nn::make_result(nn::Tensor(nn::Shape{1, 1, 1, 1}, static_cast<float>(lv.value)), {probs},
                           [pn, grad](nn::Node& self) {
                               const double seed = self.grad.data()[0];
                               float* d = pn->grad_buffer().data();
                               for (std::size_t i = 0; i < grad->size(); ++i) {
                                   d[i] += static_cast<float>(seed * (*grad)[i]);
                               }
                           });
}

}  // namespace bseg::losses
