#pragma once

// Pure-PQC and hybrid models  y = head(PQC(preprocessor(x)))  with analytic
// backpropagation through classical layers and parameter-shift (or adjoint)
// differentiation of the circuit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hqnn/archspace.hpp"
#include "hqnn/errors.hpp"
#include "hqnn/qsim.hpp"
#include "hqnn/random.hpp"

namespace hqnn {

enum class Configuration { PurePqc = 1, HybridFull = 2, HybridQuantumOnly = 3 };

enum class GradientMethod { ParameterShift, Adjoint };

inline std::string_view configuration_name(Configuration c) {
    switch (c) {
    case Configuration::PurePqc: return "pure_pqc";
    case Configuration::HybridFull: return "hybrid_full";
    case Configuration::HybridQuantumOnly: return "hybrid_quantum_only";
    }
    return "?";
}

inline Configuration configuration_from_id(int id) {
    if (id < 1 || id > 3) throw ConfigError("configuration id must be 1, 2 or 3, got " + std::to_string(id));
    return static_cast<Configuration>(id);
}

inline constexpr double kShift = std::numbers::pi / 2.0;

// ---------------------------------------------------------------------------
// Compiled circuit: encoding layer, then `depth` layers of per-qubit
// rotations followed by one fused entangling layer.

class PqcCircuit {
public:
    struct Gradients {
        std::vector<double> theta;
        std::vector<double> angles;
    };

    explicit PqcCircuit(CircuitArchitecture arch) : arch_(std::move(arch)) {
        check_architecture(arch_);
        const int n = arch_.n_qubits;
        for (int q = 0; q < n; ++q) steps_.push_back({StepKind::Encode, arch_.encoding, q, q});
        std::map<std::vector<QubitPair>, int> tables;
        const auto gate = arch_.entangler == Entangler::CNOT ? qsim::GateKind::CNOT : qsim::GateKind::CZ;
        for (int l = 0; l < arch_.depth; ++l) {
            for (int q = 0; q < n; ++q) {
                steps_.push_back({StepKind::Rotate, arch_.rotation_axes[q], q, CircuitArchitecture::param_index(n, l, q)});
            }
            if (n < 2) continue;
            auto pairs = entanglement_pairs(arch_.topology, n, l);
            if (pairs.empty()) continue;
            auto [it, fresh] = tables.try_emplace(pairs, static_cast<int>(entanglers_.size()));
            if (fresh) entanglers_.emplace_back(n, gate, pairs);
            steps_.push_back({StepKind::Entangle, Axis::Z, -1, it->second});
        }
    }

    [[nodiscard]] const CircuitArchitecture& architecture() const noexcept { return arch_; }
    [[nodiscard]] int n_qubits() const noexcept { return arch_.n_qubits; }
    [[nodiscard]] int num_parameters() const noexcept { return arch_.num_parameters(); }

    [[nodiscard]] qsim::StateVector prepare(std::span<const double> theta, std::span<const double> angles) const {
        check_shapes(theta, angles);
        qsim::StateVector psi(arch_.n_qubits);
        std::vector<qsim::Complex> scratch;
        for (const auto& s : steps_) forward_step(s, psi.amplitudes(), theta, angles, scratch);
        return psi;
    }

    [[nodiscard]] std::vector<double> expectations(std::span<const double> theta,
                                                   std::span<const double> angles) const {
        return qsim::expectations_z(prepare(theta, angles));
    }

    // Gradients of sum_q upstream[q] * <Z_q> by the two-term shift rule:
    // 2 evaluations per parameter and per encoding angle.
    [[nodiscard]] Gradients shift_gradients(std::span<const double> theta, std::span<const double> angles,
                                            std::span<const double> upstream, bool want_angles = true) const {
        check_upstream(upstream);
        Gradients g;
        g.theta.assign(theta.size(), 0.0);
        std::vector<double> t(theta.begin(), theta.end());
        for (std::size_t k = 0; k < t.size(); ++k) {
            g.theta[k] = shifted_difference(t, k, angles, upstream, /*shift_theta=*/true);
        }
        if (want_angles) {
            std::vector<double> a(angles.begin(), angles.end());
            g.angles.assign(angles.size(), 0.0);
            for (std::size_t k = 0; k < a.size(); ++k) {
                g.angles[k] = shifted_difference(a, k, theta, upstream, /*shift_theta=*/false);
            }
        }
        return g;
    }

    // Same gradients by reverse-mode sweep over the statevector: one forward
    // pass, then the observable-weighted state and the state are walked back
    // gate by gate.
    [[nodiscard]] Gradients adjoint_gradients(std::span<const double> theta, std::span<const double> angles,
                                              std::span<const double> upstream, bool want_angles = true) const {
        check_upstream(upstream);
        const int n = arch_.n_qubits;
        auto phi = prepare(theta, angles);
        std::vector<qsim::Complex> lambda(phi.amplitudes().begin(), phi.amplitudes().end());
        for (std::size_t i = 0; i < lambda.size(); ++i) {
            double h = 0.0;
            for (int q = 0; q < n; ++q) h += (i & qsim::qubit_mask(n, q)) ? -upstream[q] : upstream[q];
            lambda[i] *= h;
        }
        Gradients g;
        g.theta.assign(theta.size(), 0.0);
        if (want_angles) g.angles.assign(angles.size(), 0.0);
        std::vector<qsim::Complex> scratch;
        auto psi = phi.amplitudes();
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
            const auto& s = *it;
            if (s.kind == StepKind::Entangle) {
                entanglers_[s.index].apply_inverse(psi, scratch);
                entanglers_[s.index].apply_inverse(lambda, scratch);
                continue;
            }
            const bool rotate = s.kind == StepKind::Rotate;
            if (!rotate && !want_angles) break; // encoding steps come first; nothing left to collect
            const double d = qsim::pauli_overlap_imag(lambda, psi, n, s.axis, s.qubit);
            (rotate ? g.theta : g.angles)[s.index] = d;
            const double a = rotate ? theta[s.index] : angles[s.index];
            qsim::apply_rotation(psi, n, s.axis, s.qubit, -a);
            qsim::apply_rotation(lambda, n, s.axis, s.qubit, -a);
        }
        return g;
    }

    [[nodiscard]] Gradients gradients(GradientMethod m, std::span<const double> theta, std::span<const double> angles,
                                      std::span<const double> upstream, bool want_angles = true) const {
        return m == GradientMethod::Adjoint ? adjoint_gradients(theta, angles, upstream, want_angles)
                                            : shift_gradients(theta, angles, upstream, want_angles);
    }

private:
    enum class StepKind { Encode, Rotate, Entangle };
    struct Step {
        StepKind kind;
        Axis axis;
        int qubit;
        int index; // angle index, theta index or entangler table
    };

    void forward_step(const Step& s, std::span<qsim::Complex> amps, std::span<const double> theta,
                      std::span<const double> angles, std::vector<qsim::Complex>& scratch) const {
        switch (s.kind) {
        case StepKind::Encode: qsim::apply_rotation(amps, arch_.n_qubits, s.axis, s.qubit, angles[s.index]); break;
        case StepKind::Rotate: qsim::apply_rotation(amps, arch_.n_qubits, s.axis, s.qubit, theta[s.index]); break;
        case StepKind::Entangle: entanglers_[s.index].apply(amps, scratch); break;
        }
    }

    double shifted_difference(std::vector<double>& shifted, std::size_t k, std::span<const double> other,
                              std::span<const double> upstream, bool shift_theta) const {
        const double orig = shifted[k];
        auto eval = [&](double v) {
            shifted[k] = v;
            return shift_theta ? expectations(shifted, other) : expectations(other, shifted);
        };
        const auto plus = eval(orig + kShift);
        const auto minus = eval(orig - kShift);
        shifted[k] = orig;
        double d = 0.0;
        for (std::size_t q = 0; q < upstream.size(); ++q) d += upstream[q] * 0.5 * (plus[q] - minus[q]);
        return d;
    }

    void check_shapes(std::span<const double> theta, std::span<const double> angles) const {
        if (static_cast<int>(theta.size()) != arch_.num_parameters()) {
            throw ShapeError("theta length " + std::to_string(theta.size()) + " != n_qubits*depth = " +
                             std::to_string(arch_.num_parameters()));
        }
        if (static_cast<int>(angles.size()) != arch_.n_qubits) {
            throw ShapeError("encoding angle count " + std::to_string(angles.size()) + " != n_qubits");
        }
    }

    void check_upstream(std::span<const double> upstream) const {
        if (static_cast<int>(upstream.size()) != arch_.n_qubits) throw ShapeError("upstream length != n_qubits");
    }

    CircuitArchitecture arch_;
    std::vector<Step> steps_;
    std::vector<qsim::FusedEntangler> entanglers_;
};

inline std::vector<double> quantum_forward(const CircuitArchitecture& arch, std::span<const double> theta,
                                           std::span<const double> angles) {
    return PqcCircuit(arch).expectations(theta, angles);
}

inline std::vector<double> quantum_param_grad(const CircuitArchitecture& arch, std::span<const double> theta,
                                              std::span<const double> angles, std::span<const double> upstream) {
    return PqcCircuit(arch).shift_gradients(theta, angles, upstream, false).theta;
}

inline std::vector<double> quantum_input_grad(const CircuitArchitecture& arch, std::span<const double> theta,
                                              std::span<const double> angles, std::span<const double> upstream) {
    return PqcCircuit(arch).shift_gradients(theta, angles, upstream, true).angles;
}

// ---------------------------------------------------------------------------
// Classical layers. All classical parameters live in one flat vector phi;
// layers reference it through slices.

struct ParamSlice {
    std::size_t offset = 0;
    std::size_t size = 0;
};

struct DenseShape {
    int in = 0;
    int out = 0;
    ParamSlice weights; // out x in, row-major
    ParamSlice bias;
};

struct ConvShape {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int height = 0; // input spatial size (stride 1, same padding keeps it)
    int width = 0;
    bool pool = false; // effective: disabled when the map is smaller than 2x2
    ParamSlice weights; // out x in x k x k
    ParamSlice bias;

    [[nodiscard]] int out_height() const noexcept { return pool ? height / 2 : height; }
    [[nodiscard]] int out_width() const noexcept { return pool ? width / 2 : width; }
    [[nodiscard]] std::size_t out_size() const noexcept {
        return static_cast<std::size_t>(out_channels) * out_height() * out_width();
    }
};

inline double activate(Activation a, double z) {
    switch (a) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::SiLU: return z / (1.0 + std::exp(-z));
    case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::SiLU: {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

inline void dense_forward(const DenseShape& d, std::span<const double> phi, std::span<const double> x,
                          std::span<double> y) {
    const double* w = phi.data() + d.weights.offset;
    const double* b = phi.data() + d.bias.offset;
    for (int o = 0; o < d.out; ++o) {
        double s = b[o];
        const double* row = w + static_cast<std::size_t>(o) * d.in;
        for (int i = 0; i < d.in; ++i) s += row[i] * x[i];
        y[o] = s;
    }
}

// Accumulates parameter gradients into dphi (if non-empty) and writes dx (if non-empty).
inline void dense_backward(const DenseShape& d, std::span<const double> phi, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dphi, std::span<double> dx) {
    const double* w = phi.data() + d.weights.offset;
    if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
    for (int o = 0; o < d.out; ++o) {
        const double g = dy[o];
        const double* row = w + static_cast<std::size_t>(o) * d.in;
        if (!dphi.empty()) {
            double* dw = dphi.data() + d.weights.offset + static_cast<std::size_t>(o) * d.in;
            for (int i = 0; i < d.in; ++i) dw[i] += g * x[i];
            dphi[d.bias.offset + o] += g;
        }
        if (!dx.empty()) {
            for (int i = 0; i < d.in; ++i) dx[i] += g * row[i];
        }
    }
}

// Stride-1 zero-padded convolution preserving spatial size; z = W * x + b.
inline void conv_forward(const ConvShape& c, std::span<const double> phi, std::span<const double> x,
                         std::span<double> z) {
    const int H = c.height, W = c.width, K = c.kernel, P = K / 2;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const double* w = phi.data() + c.weights.offset;
    const double* b = phi.data() + c.bias.offset;
    for (int o = 0; o < c.out_channels; ++o) {
        double* out = z.data() + o * plane;
        std::fill(out, out + plane, b[o]);
        for (int ch = 0; ch < c.in_channels; ++ch) {
            const double* in = x.data() + ch * plane;
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - P;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - P;
                    const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                    const double wv = w[((static_cast<std::size_t>(o) * c.in_channels + ch) * K + ky) * K + kx];
                    for (int y = y0; y < y1; ++y) {
                        double* orow = out + y * W;
                        const double* irow = in + (y + dy) * W + dx;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
                    }
                }
            }
        }
    }
}

inline void conv_backward(const ConvShape& c, std::span<const double> phi, std::span<const double> x,
                          std::span<const double> dz, std::span<double> dphi, std::span<double> dx) {
    const int H = c.height, W = c.width, K = c.kernel, P = K / 2;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const double* w = phi.data() + c.weights.offset;
    if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
    for (int o = 0; o < c.out_channels; ++o) {
        const double* g = dz.data() + o * plane;
        if (!dphi.empty()) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += g[i];
            dphi[c.bias.offset + o] += s;
        }
        for (int ch = 0; ch < c.in_channels; ++ch) {
            const double* in = x.data() + ch * plane;
            double* din = dx.empty() ? nullptr : dx.data() + ch * plane;
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - P;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dxo = kx - P;
                    const int x0 = std::max(0, -dxo), x1 = std::min(W, W - dxo);
                    const std::size_t widx = ((static_cast<std::size_t>(o) * c.in_channels + ch) * K + ky) * K + kx;
                    const double wv = w[widx];
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* grow = g + y * W;
                        const double* irow = in + (y + dy) * W + dxo;
                        double* drow = din ? din + (y + dy) * W + dxo : nullptr;
                        for (int xx = x0; xx < x1; ++xx) {
                            acc += grow[xx] * irow[xx];
                            if (drow) drow[xx] += wv * grow[xx];
                        }
                    }
                    if (!dphi.empty()) dphi[c.weights.offset + widx] += acc;
                }
            }
        }
    }
}

// 2x2 max pool, stride 2, floor semantics. argmax holds flat source indices.
inline void maxpool_forward(int channels, int H, int W, std::span<const double> a, std::vector<double>& out,
                            std::vector<int>& argmax) {
    const int oh = H / 2, ow = W / 2;
    out.assign(static_cast<std::size_t>(channels) * oh * ow, 0.0);
    argmax.assign(out.size(), 0);
    for (int c = 0; c < channels; ++c) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int best = c * H * W + (2 * y) * W + 2 * x;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx = c * H * W + (2 * y + dy) * W + 2 * x + dx;
                        if (a[idx] > a[best]) best = idx;
                    }
                const std::size_t o = (static_cast<std::size_t>(c) * oh + y) * ow + x;
                out[o] = a[best];
                argmax[o] = best;
            }
        }
    }
}

// ---------------------------------------------------------------------------

enum class ModelMode { Pure, Dense, Conv };

struct HybridModel {
    ModelMode mode = ModelMode::Pure;
    CircuitArchitecture arch;
    std::vector<double> theta;
    std::vector<double> phi;
    int n_classes = 2;
    int input_size = 2;
    int image_height = 0;
    int image_width = 0;
    Activation activation = Activation::ReLU;
    std::optional<ConvShape> conv1;
    std::optional<ConvShape> conv2;
    std::optional<DenseShape> projection; // dense preprocessor, or conv-to-qubit projection
    std::optional<DenseShape> head;
    std::uint64_t init_seed = 0;
    std::shared_ptr<const PqcCircuit> circuit;

    [[nodiscard]] bool has_classical() const noexcept { return mode != ModelMode::Pure; }
    [[nodiscard]] const PqcCircuit& pqc() const { return *circuit; }
};

struct ForwardTrace {
    std::vector<double> input;
    std::vector<double> z1, a1, p1; // conv1 pre-activation, activation, pooled
    std::vector<int> arg1;
    std::vector<double> z2, a2, p2;
    std::vector<int> arg2;
    std::vector<double> pre;    // pre-tanh features feeding the encoding
    std::vector<double> angles; // encoding angles
    std::vector<double> expectations;
    std::vector<double> logits;
};

namespace detail {

inline ParamSlice take(std::size_t& cursor, std::size_t n) {
    ParamSlice s{cursor, n};
    cursor += n;
    return s;
}

inline DenseShape make_dense(std::size_t& cursor, int in, int out) {
    DenseShape d{in, out, {}, {}};
    d.weights = take(cursor, static_cast<std::size_t>(in) * out);
    d.bias = take(cursor, static_cast<std::size_t>(out));
    return d;
}

inline void fill_uniform(std::vector<double>& phi, ParamSlice s, double bound, Rng& rng) {
    for (std::size_t i = 0; i < s.size; ++i) phi[s.offset + i] = uniform_real(rng, -bound, bound);
}

inline void init_dense(std::vector<double>& phi, const DenseShape& d, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
    fill_uniform(phi, d.weights, bound, rng);
    fill_uniform(phi, d.bias, bound, rng);
}

inline void init_theta(HybridModel& m, Rng& rng) {
    m.theta.resize(static_cast<std::size_t>(m.arch.num_parameters()));
    for (auto& t : m.theta) t = uniform_angle(rng);
}

} // namespace detail

// Configuration 1: no classical layers; logits are (<Z_0>, <Z_1>) and the
// two input features are encoded on qubits 0 and 1.
inline HybridModel make_pure_model(const CircuitArchitecture& arch, std::uint64_t seed) {
    check_architecture(arch);
    if (arch.n_qubits < 2) throw SizeError("pure-PQC readout needs at least 2 qubits");
    HybridModel m;
    m.mode = ModelMode::Pure;
    m.arch = arch;
    m.n_classes = 2;
    m.input_size = 2;
    m.init_seed = seed;
    Rng rng(seed);
    detail::init_theta(m, rng);
    m.circuit = std::make_shared<const PqcCircuit>(arch);
    return m;
}

// dense(in -> n) -> pi*tanh -> PQC -> linear(n -> n_classes).
inline HybridModel make_dense_model(const CircuitArchitecture& arch, std::uint64_t seed, int n_classes = 2,
                                    int input_size = 2) {
    check_architecture(arch);
    HybridModel m;
    m.mode = ModelMode::Dense;
    m.arch = arch;
    m.n_classes = n_classes;
    m.input_size = input_size;
    m.init_seed = seed;
    std::size_t cursor = 0;
    m.projection = detail::make_dense(cursor, input_size, arch.n_qubits);
    m.head = detail::make_dense(cursor, arch.n_qubits, n_classes);
    m.phi.assign(cursor, 0.0);
    Rng rng(seed);
    detail::init_theta(m, rng);
    detail::init_dense(m.phi, *m.projection, rng);
    detail::init_dense(m.phi, *m.head, rng);
    m.circuit = std::make_shared<const PqcCircuit>(arch);
    return m;
}

// conv -> act -> [pool] -> conv -> act -> [pool] -> flatten -> linear(-> n)
// -> pi*tanh -> PQC -> linear(n -> n_classes). Single-channel input images.
inline HybridModel make_conv_model(const HybridGenome& genome, int height, int width, int n_classes,
                                   std::uint64_t seed) {
    check_architecture(genome.quantum);
    if (height < 1 || width < 1) throw SizeError("image dimensions must be positive");
    HybridModel m;
    m.mode = ModelMode::Conv;
    m.arch = genome.quantum;
    m.n_classes = n_classes;
    m.input_size = height * width;
    m.image_height = height;
    m.image_width = width;
    m.activation = genome.activation;
    m.init_seed = seed;
    std::size_t cursor = 0;
    auto conv = [&cursor](const ConvSpec& spec, int in_ch, int h, int w) {
        ConvShape c;
        c.in_channels = in_ch;
        c.out_channels = spec.channels;
        c.kernel = spec.kernel;
        c.height = h;
        c.width = w;
        c.pool = spec.pool && h >= 2 && w >= 2;
        c.weights = detail::take(cursor, static_cast<std::size_t>(spec.channels) * in_ch * spec.kernel * spec.kernel);
        c.bias = detail::take(cursor, static_cast<std::size_t>(spec.channels));
        return c;
    };
    m.conv1 = conv(genome.conv1, 1, height, width);
    m.conv2 = conv(genome.conv2, m.conv1->out_channels, m.conv1->out_height(), m.conv1->out_width());
    m.projection = detail::make_dense(cursor, static_cast<int>(m.conv2->out_size()), genome.quantum.n_qubits);
    m.head = detail::make_dense(cursor, genome.quantum.n_qubits, n_classes);
    m.phi.assign(cursor, 0.0);
    Rng rng(seed);
    detail::init_theta(m, rng);
    for (const ConvShape* c : {&*m.conv1, &*m.conv2}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels * c->kernel * c->kernel));
        detail::fill_uniform(m.phi, c->weights, bound, rng);
        detail::fill_uniform(m.phi, c->bias, bound, rng);
    }
    detail::init_dense(m.phi, *m.projection, rng);
    detail::init_dense(m.phi, *m.head, rng);
    m.circuit = std::make_shared<const PqcCircuit>(genome.quantum);
    return m;
}

namespace detail {

inline void conv_stage(const ConvShape& c, Activation act, std::span<const double> phi, std::span<const double> in,
                       std::vector<double>& z, std::vector<double>& a, std::vector<double>& p, std::vector<int>& arg) {
    z.assign(static_cast<std::size_t>(c.out_channels) * c.height * c.width, 0.0);
    conv_forward(c, phi, in, z);
    a.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(act, z[i]);
    if (c.pool) {
        maxpool_forward(c.out_channels, c.height, c.width, a, p, arg);
    } else {
        p = a;
        arg.clear();
    }
}

} // namespace detail

// Preprocessor only: input sample -> encoding angles (trace filled up to `angles`).
inline std::vector<double> encode(const HybridModel& m, std::span<const double> x, ForwardTrace* trace = nullptr) {
    if (static_cast<int>(x.size()) != m.input_size) {
        throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(m.input_size));
    }
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    t.input.assign(x.begin(), x.end());
    const int n = m.arch.n_qubits;
    switch (m.mode) {
    case ModelMode::Pure:
        t.angles.assign(static_cast<std::size_t>(n), 0.0);
        t.angles[0] = x[0];
        t.angles[1] = x[1];
        t.pre.clear();
        return t.angles;
    case ModelMode::Dense:
        t.pre.assign(static_cast<std::size_t>(n), 0.0);
        dense_forward(*m.projection, m.phi, x, t.pre);
        break;
    case ModelMode::Conv:
        detail::conv_stage(*m.conv1, m.activation, m.phi, x, t.z1, t.a1, t.p1, t.arg1);
        detail::conv_stage(*m.conv2, m.activation, m.phi, t.p1, t.z2, t.a2, t.p2, t.arg2);
        t.pre.assign(static_cast<std::size_t>(n), 0.0);
        dense_forward(*m.projection, m.phi, t.p2, t.pre);
        break;
    }
    t.angles.resize(t.pre.size());
    for (std::size_t i = 0; i < t.pre.size(); ++i) t.angles[i] = std::numbers::pi * std::tanh(t.pre[i]);
    return t.angles;
}

inline std::pair<std::vector<double>, ForwardTrace> forward(const HybridModel& m, std::span<const double> x) {
    ForwardTrace t;
    encode(m, x, &t);
    t.expectations = m.pqc().expectations(m.theta, t.angles);
    if (m.mode == ModelMode::Pure) {
        t.logits = {t.expectations[0], t.expectations[1]};
    } else {
        t.logits.assign(static_cast<std::size_t>(m.n_classes), 0.0);
        dense_forward(*m.head, m.phi, t.expectations, t.logits);
    }
    return {t.logits, std::move(t)};
}

// Stable softmax cross-entropy; returns the loss and writes softmax - onehot.
inline double softmax_cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits) {
    if (label < 0 || label >= static_cast<int>(logits.size())) {
        throw IndexError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < logits.size(); ++c) {
        dlogits[c] = std::exp(logits[c] - lse) - (static_cast<int>(c) == label ? 1.0 : 0.0);
    }
    return lse - logits[label];
}

struct GradientRecord {
    std::vector<double> theta;
    std::optional<std::vector<double>> phi;

    [[nodiscard]] std::size_t scope_size() const noexcept { return theta.size() + (phi ? phi->size() : 0); }
};

// Backpropagates dlogits of one sample, accumulating scaled gradients.
inline void backward(const HybridModel& m, const ForwardTrace& t, std::span<const double> dlogits, double scale,
                     GradientMethod method, std::span<double> dtheta, std::span<double> dphi) {
    const int n = m.arch.n_qubits;
    const bool want_phi = !dphi.empty();
    std::vector<double> g(dlogits.begin(), dlogits.end());
    for (auto& v : g) v *= scale;

    std::vector<double> de(static_cast<std::size_t>(n), 0.0);
    if (m.mode == ModelMode::Pure) {
        de[0] = g[0];
        de[1] = g[1];
    } else {
        dense_backward(*m.head, m.phi, t.expectations, g, dphi, de);
    }
    const bool want_angles = want_phi; // angles only matter when classical gradients are collected
    const auto qg = m.pqc().gradients(method, m.theta, t.angles, de, want_angles);
    for (std::size_t k = 0; k < qg.theta.size(); ++k) dtheta[k] += qg.theta[k];
    if (!want_phi || m.mode == ModelMode::Pure) return;

    std::vector<double> dpre(static_cast<std::size_t>(n));
    for (int q = 0; q < n; ++q) {
        const double th = std::tanh(t.pre[q]);
        dpre[q] = qg.angles[q] * std::numbers::pi * (1.0 - th * th);
    }
    if (m.mode == ModelMode::Dense) {
        dense_backward(*m.projection, m.phi, t.input, dpre, dphi, {});
        return;
    }
    // Conv mode.
    std::vector<double> dp2(t.p2.size());
    dense_backward(*m.projection, m.phi, t.p2, dpre, dphi, dp2);
    auto unpool_act = [&m](const ConvShape& c, std::span<const double> dp, const std::vector<int>& arg,
                           const std::vector<double>& z) {
        std::vector<double> dz(z.size(), 0.0);
        if (c.pool) {
            for (std::size_t i = 0; i < dp.size(); ++i) dz[arg[i]] += dp[i];
        } else {
            std::copy(dp.begin(), dp.end(), dz.begin());
        }
        for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activate_grad(m.activation, z[i]);
        return dz;
    };
    const auto dz2 = unpool_act(*m.conv2, dp2, t.arg2, t.z2);
    std::vector<double> dp1(t.p1.size());
    conv_backward(*m.conv2, m.phi, t.p1, dz2, dphi, dp1);
    const auto dz1 = unpool_act(*m.conv1, dp1, t.arg1, t.z1);
    conv_backward(*m.conv1, m.phi, t.input, dz1, dphi, {});
}

inline void check_configuration(const HybridModel& m, Configuration c) {
    const bool pure = c == Configuration::PurePqc;
    if (pure != (m.mode == ModelMode::Pure)) {
        throw ConfigError(std::string("configuration ") + std::string(configuration_name(c)) +
                          (pure ? " requires a model without classical layers"
                                : " requires a hybrid model with classical layers"));
    }
}

// Mean cross-entropy over the batch and its gradient. theta gradients are
// always present; phi gradients only under full hybrid training.
inline std::pair<double, GradientRecord> loss_and_grad(const HybridModel& m,
                                                       std::span<const std::vector<double>> inputs,
                                                       std::span<const int> labels, Configuration config,
                                                       GradientMethod method = GradientMethod::Adjoint) {
    check_configuration(m, config);
    if (inputs.empty()) throw ShapeError("empty batch");
    if (inputs.size() != labels.size()) throw ShapeError("inputs and labels differ in length");
    GradientRecord rec;
    rec.theta.assign(m.theta.size(), 0.0);
    std::vector<double> dphi;
    if (config == Configuration::HybridFull) dphi.assign(m.phi.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(inputs.size());
    double loss = 0.0;
    std::vector<double> dlogits;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto [logits, trace] = forward(m, inputs[i]);
        dlogits.assign(logits.size(), 0.0);
        loss += softmax_cross_entropy(logits, labels[i], dlogits);
        backward(m, trace, dlogits, scale, method, rec.theta, dphi);
    }
    if (config == Configuration::HybridFull) rec.phi = std::move(dphi);
    return {loss * scale, std::move(rec)};
}

inline std::size_t argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

inline int predict(const HybridModel& m, std::span<const double> x) {
    return static_cast<int>(argmax_lowest(forward(m, x).first));
}

// --- checkpoints -------------------------------------------------------------

inline std::string_view mode_name(ModelMode m) {
    switch (m) {
    case ModelMode::Pure: return "pure";
    case ModelMode::Dense: return "dense";
    case ModelMode::Conv: return "conv";
    }
    return "?";
}

inline nlohmann::json checkpoint_json(const HybridModel& m, const std::optional<HybridGenome>& genome = {}) {
    nlohmann::json j{{"mode", mode_name(m.mode)},
                     {"architecture", m.arch},
                     {"n_classes", m.n_classes},
                     {"input_size", m.input_size},
                     {"image_height", m.image_height},
                     {"image_width", m.image_width},
                     {"init_seed", m.init_seed},
                     {"theta", m.theta},
                     {"phi", m.phi}};
    if (genome) j["genome"] = *genome;
    return j;
}

inline HybridModel model_from_checkpoint(const nlohmann::json& j) {
    const auto mode = j.at("mode").get<std::string>();
    const auto seed = j.at("init_seed").get<std::uint64_t>();
    HybridModel m;
    if (mode == "pure") {
        m = make_pure_model(j.at("architecture").get<CircuitArchitecture>(), seed);
    } else if (mode == "dense") {
        m = make_dense_model(j.at("architecture").get<CircuitArchitecture>(), seed, j.at("n_classes").get<int>(),
                             j.at("input_size").get<int>());
    } else if (mode == "conv") {
        m = make_conv_model(j.at("genome").get<HybridGenome>(), j.at("image_height").get<int>(),
                            j.at("image_width").get<int>(), j.at("n_classes").get<int>(), seed);
    } else {
        throw ConfigError("unknown model mode '" + mode + "'");
    }
    auto theta = j.at("theta").get<std::vector<double>>();
    auto phi = j.at("phi").get<std::vector<double>>();
    if (theta.size() != m.theta.size() || phi.size() != m.phi.size()) {
        throw ShapeError("checkpoint parameter arrays do not match the architecture");
    }
    m.theta = std::move(theta);
    m.phi = std::move(phi);
    return m;
}

} // namespace hqnn
