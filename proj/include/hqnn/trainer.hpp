#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hqnn/data.hpp"
#include "hqnn/errors.hpp"
#include "hqnn/hybridnet.hpp"
#include "hqnn/metrics.hpp"
#include "hqnn/random.hpp"

namespace hqnn {

struct AdamHyper {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, const AdamHyper& h) {
    if (params.size() != grads.size() || params.size() != s.m.size() || s.m.size() != s.v.size()) {
        throw ShapeError("adam_step: parameter, gradient and moment shapes disagree");
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g;
        s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g * g;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        params[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
}

struct TrainConfig {
    Configuration configuration = Configuration::HybridFull;
    double learning_rate = 0.01;
    int epochs = 15;
    int batch_size = 32;
    std::uint64_t seed = 0;
    GradientMethod gradient_method = GradientMethod::Adjoint;
};

struct GradientSnapshot {
    int epoch = 0;
    double theta_norm = 0.0;
    double phi_norm = 0.0; // 0 when classical parameters are frozen or absent
};

struct TrainingRecord {
    std::vector<double> loss_history;         // mean training loss per epoch
    std::vector<double> val_accuracy_history; // after each epoch
    std::vector<GradientSnapshot> snapshots;  // last mini-batch of each epoch
    HybridModel model;

    // One JSON object per epoch, newline separated.
    [[nodiscard]] std::string to_jsonl() const {
        std::string out;
        for (std::size_t e = 0; e < loss_history.size(); ++e) {
            nlohmann::json j{{"epoch", e + 1},
                             {"loss", loss_history[e]},
                             {"val_accuracy", val_accuracy_history[e]},
                             {"theta_grad_norm", snapshots[e].theta_norm},
                             {"phi_grad_norm", snapshots[e].phi_norm}};
            out += j.dump() + "\n";
        }
        return out;
    }
};

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Seeded mini-batch Adam over the configuration's parameter set. Classical
// layers always take part in the forward pass of hybrid models.
inline TrainingRecord train(HybridModel model, const LabeledDataset& ds, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
    check_configuration(model, cfg.configuration);
    if (ds.train.empty()) throw ShapeError("training split is empty");

    const bool update_phi = cfg.configuration == Configuration::HybridFull;
    const AdamHyper hyper{cfg.learning_rate, 0.9, 0.999, 1e-8};
    AdamState theta_state(model.theta.size());
    AdamState phi_state(update_phi ? model.phi.size() : 0);
    const auto val_x = ds.gather_features(ds.validation);
    const auto val_y = ds.gather_labels(ds.validation);

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(ds.train);
    TrainingRecord rec;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        GradientSnapshot snap{epoch + 1, 0.0, 0.0};
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const auto x = ds.gather_features(idx);
            const auto y = ds.gather_labels(idx);
            auto [loss, grad] = loss_and_grad(model, x, y, cfg.configuration, cfg.gradient_method);
            loss_sum += loss * static_cast<double>(idx.size());
            adam_step(model.theta, grad.theta, theta_state, hyper);
            if (update_phi) adam_step(model.phi, *grad.phi, phi_state, hyper);
            snap.theta_norm = l2_norm(grad.theta);
            snap.phi_norm = grad.phi ? l2_norm(*grad.phi) : 0.0;
        }
        rec.loss_history.push_back(loss_sum / static_cast<double>(order.size()));
        rec.val_accuracy_history.push_back(val_x.empty() ? 0.0 : validation_accuracy(model, val_x, val_y));
        rec.snapshots.push_back(snap);
    }
    rec.model = std::move(model);
    return rec;
}

} // namespace hqnn
