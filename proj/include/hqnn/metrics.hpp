#pragma once

// Expressibility, trainability and accuracy metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqnn/archspace.hpp"
#include "hqnn/data.hpp"
#include "hqnn/errors.hpp"
#include "hqnn/hybridnet.hpp"
#include "hqnn/random.hpp"

namespace hqnn {

// (1/ln d) * sum_i p_i ln(p_i d), with 0 ln 0 := 0. Lies in [0, 1]:
// 0 for the uniform distribution, 1 for a single basis state.
inline double normalized_kl_to_uniform(std::span<const double> p) {
    const double d = static_cast<double>(p.size());
    if (p.size() < 2) throw SizeError("distribution must have at least 2 outcomes");
    double s = 0.0;
    for (double pi : p) {
        if (pi > 0.0) s += pi * std::log(pi * d);
    }
    return s / std::log(d);
}

using EncodeFn = std::function<std::vector<double>(std::span<const double>)>;

// Mean normalized KL to uniform over n_samples draws of theta ~ U[0, 2pi)^p,
// each paired with one input drawn uniformly from `inputs`.
inline double expressibility_uniform_kl(const CircuitArchitecture& arch, const EncodeFn& encode_fn,
                                        std::span<const std::vector<double>> inputs, int n_samples, Rng& rng) {
    if (inputs.empty()) throw ShapeError("expressibility needs a non-empty dataset");
    if (n_samples < 1) throw SizeError("n_samples must be >= 1");
    const PqcCircuit circuit(arch);
    std::vector<double> theta(static_cast<std::size_t>(arch.num_parameters()));
    double total = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        for (auto& t : theta) t = uniform_angle(rng);
        const auto& x = inputs[uniform_index(rng, inputs.size())];
        const auto angles = encode_fn(x);
        total += normalized_kl_to_uniform(qsim::probabilities(circuit.prepare(theta, angles)));
    }
    return total / n_samples;
}

// Probability mass of the Haar fidelity density (d-1)(1-F)^(d-2) on [lo, hi].
inline double haar_bin_mass(double lo, double hi, double d) {
    return std::pow(1.0 - lo, d - 1.0) - std::pow(1.0 - hi, d - 1.0);
}

inline constexpr double kHaarSmoothing = 1e-10;
inline constexpr int kHaarDefaultBins = 75;

// Fidelity-histogram KL divergence against the Haar ensemble. Encoding
// angles are zero; empirical bin masses get +eps, Haar masses are floored at eps.
inline double expressibility_haar_kl(const CircuitArchitecture& arch, int n_pairs, int n_bins, Rng& rng) {
    if (n_pairs < 100) throw SizeError("n_pairs must be >= 100");
    if (n_bins < 10) throw SizeError("n_bins must be >= 10");
    const PqcCircuit circuit(arch);
    const std::vector<double> zeros(static_cast<std::size_t>(arch.n_qubits), 0.0);
    std::vector<double> t1(static_cast<std::size_t>(arch.num_parameters())), t2(t1.size());
    std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
    for (int k = 0; k < n_pairs; ++k) {
        for (auto& t : t1) t = uniform_angle(rng);
        for (auto& t : t2) t = uniform_angle(rng);
        const auto a = circuit.prepare(t1, zeros);
        const auto b = circuit.prepare(t2, zeros);
        qsim::Complex ov{0.0, 0.0};
        for (std::size_t i = 0; i < a.dim(); ++i) ov += std::conj(a[i]) * b[i];
        const double f = std::clamp(std::norm(ov), 0.0, 1.0);
        const int bin = std::min(n_bins - 1, static_cast<int>(f * n_bins));
        counts[bin] += 1.0;
    }
    const double d = std::ldexp(1.0, arch.n_qubits);
    double kl = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        const double p = counts[b] / n_pairs + kHaarSmoothing;
        const double q = std::max(haar_bin_mass(static_cast<double>(b) / n_bins, static_cast<double>(b + 1) / n_bins, d),
                                  kHaarSmoothing);
        kl += p * std::log(p / q);
    }
    return kl;
}

// Population variance of all components, in index order.
inline double population_variance(std::span<const double> v) {
    if (v.size() < 2) throw SizeError("variance needs at least 2 gradient components");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size());
}

// theta components, followed by phi components when present.
inline std::vector<double> pooled_components(const GradientRecord& rec) {
    std::vector<double> all(rec.theta);
    if (rec.phi) all.insert(all.end(), rec.phi->begin(), rec.phi->end());
    return all;
}

inline double pooled_variance(const GradientRecord& rec) { return population_variance(pooled_components(rec)); }

enum class VarianceMode {
    BatchMeanGradient, // gradient of the batch-mean loss, variance across components
    PerSamplePooled,   // per-sample gradients, all components of all samples pooled
};

// Gradient variance with the scope implied by the configuration: theta for
// configurations 1 and 3, theta and phi for configuration 2.
inline double gradient_variance(const HybridModel& m, Configuration config,
                                std::span<const std::vector<double>> inputs, std::span<const int> labels,
                                GradientMethod method = GradientMethod::Adjoint,
                                VarianceMode mode = VarianceMode::BatchMeanGradient) {
    if (mode == VarianceMode::BatchMeanGradient) {
        return pooled_variance(loss_and_grad(m, inputs, labels, config, method).second);
    }
    std::vector<double> all;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto rec = loss_and_grad(m, inputs.subspan(i, 1), labels.subspan(i, 1), config, method).second;
        const auto c = pooled_components(rec);
        all.insert(all.end(), c.begin(), c.end());
    }
    return population_variance(all);
}

// -log10(variance); nullopt marks a degenerate (untrainable) outcome.
inline std::optional<double> trainability(double variance) {
    if (!(variance > 0.0) || !std::isfinite(variance)) return std::nullopt;
    return -std::log10(variance);
}

inline double validation_accuracy(const HybridModel& m, std::span<const std::vector<double>> inputs,
                                  std::span<const int> labels) {
    if (inputs.empty()) throw ShapeError("empty validation set");
    if (inputs.size() != labels.size()) throw ShapeError("inputs and labels differ in length");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (predict(m, inputs[i]) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

inline double validation_accuracy(const HybridModel& m, const LabeledDataset& ds) {
    const auto x = ds.gather_features(ds.validation);
    const auto y = ds.gather_labels(ds.validation);
    return validation_accuracy(m, x, y);
}

// Accuracy from precomputed logits, ties toward the lowest class index.
inline double accuracy_from_logits(std::span<const std::vector<double>> logits, std::span<const int> labels) {
    if (logits.empty()) throw ShapeError("empty validation set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (static_cast<int>(argmax_lowest(logits[i])) == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(logits.size());
}

struct MetricTriple {
    double accuracy = 0.0;
    double expressibility = 0.0;
    std::optional<double> trainability;
};

// --- CSV -----------------------------------------------------------------------

inline constexpr const char* kMetricCsvHeader =
    "arch_id,setting,configuration,n,depth,topology,entangler,accuracy,expressibility,trainability,variance,seed";

struct MetricRow {
    int arch_id = 0;
    int setting = 0;
    int configuration = 0;
    CircuitArchitecture arch;
    MetricTriple metrics;
    double variance = 0.0;
    std::uint64_t seed = 0;
};

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_line(const MetricRow& r) {
    return std::to_string(r.arch_id) + "," + std::to_string(r.setting) + "," + std::to_string(r.configuration) + "," +
           std::to_string(r.arch.n_qubits) + "," + std::to_string(r.arch.depth) + "," +
           std::string(topology_name(r.arch.topology.kind)) + "," + std::string(entangler_name(r.arch.entangler)) +
           "," + format_real(r.metrics.accuracy) + "," + format_real(r.metrics.expressibility) + "," +
           (r.metrics.trainability ? format_real(*r.metrics.trainability) : std::string("nan")) + "," +
           format_real(r.variance) + "," + std::to_string(r.seed);
}

} // namespace hqnn
