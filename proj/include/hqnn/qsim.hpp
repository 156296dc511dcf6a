#pragma once

// Dense statevector simulator over RX/RY/RZ rotations and CNOT/CZ entanglers.
//
// Qubit 0 is the most significant bit of the basis index: for n qubits the
// amplitude of |q0 q1 ... q(n-1)> lives at index sum_k q_k * 2^(n-1-k).
// Gates act in place with stride arithmetic; no 2^n x 2^n matrix is formed.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hqnn/errors.hpp"

namespace hqnn::qsim {

using Complex = std::complex<double>;

inline constexpr int kMaxQubits = 14;

enum class Axis { X, Y, Z };

enum class GateKind { RX, RY, RZ, CNOT, CZ };

constexpr bool is_rotation(GateKind k) noexcept {
    return k == GateKind::RX || k == GateKind::RY || k == GateKind::RZ;
}

constexpr GateKind rotation_kind(Axis a) noexcept {
    switch (a) {
    case Axis::X: return GateKind::RX;
    case Axis::Y: return GateKind::RY;
    case Axis::Z: return GateKind::RZ;
    }
    return GateKind::RZ;
}

constexpr std::string_view axis_name(Axis a) noexcept {
    switch (a) {
    case Axis::X: return "RX";
    case Axis::Y: return "RY";
    case Axis::Z: return "RZ";
    }
    return "?";
}

inline std::optional<Axis> parse_axis(std::string_view s) {
    if (s == "RX" || s == "X" || s == "rx" || s == "x" || s == "angle-X") return Axis::X;
    if (s == "RY" || s == "Y" || s == "ry" || s == "y" || s == "angle-Y") return Axis::Y;
    if (s == "RZ" || s == "Z" || s == "rz" || s == "z" || s == "angle-Z") return Axis::Z;
    return std::nullopt;
}

struct GateOp {
    GateKind kind = GateKind::RZ;
    int target = 0;
    std::optional<int> control;
    double angle = 0.0;

    static GateOp rx(int q, double a) { return {GateKind::RX, q, std::nullopt, a}; }
    static GateOp ry(int q, double a) { return {GateKind::RY, q, std::nullopt, a}; }
    static GateOp rz(int q, double a) { return {GateKind::RZ, q, std::nullopt, a}; }
    static GateOp rotation(Axis axis, int q, double a) { return {rotation_kind(axis), q, std::nullopt, a}; }
    static GateOp cnot(int c, int t) { return {GateKind::CNOT, t, c, 0.0}; }
    static GateOp cz(int c, int t) { return {GateKind::CZ, t, c, 0.0}; }
};

class StateVector {
public:
    explicit StateVector(int n_qubits) : n_(n_qubits), amps_(std::size_t{1} << n_qubits) {
        amps_[0] = Complex{1.0, 0.0};
    }

    StateVector(int n_qubits, std::vector<Complex> amplitudes) : n_(n_qubits), amps_(std::move(amplitudes)) {
        if (amps_.size() != (std::size_t{1} << n_qubits)) {
            throw ShapeError("amplitude count must equal 2^n_qubits");
        }
    }

    [[nodiscard]] int n_qubits() const noexcept { return n_; }
    [[nodiscard]] std::size_t dim() const noexcept { return amps_.size(); }

    [[nodiscard]] std::span<const Complex> amplitudes() const noexcept { return amps_; }
    [[nodiscard]] std::span<Complex> amplitudes() noexcept { return amps_; }

    const Complex& operator[](std::size_t i) const { return amps_[i]; }
    Complex& operator[](std::size_t i) { return amps_[i]; }

    [[nodiscard]] double norm_squared() const noexcept {
        double s = 0.0;
        for (const auto& a : amps_) s += std::norm(a);
        return s;
    }

private:
    int n_;
    std::vector<Complex> amps_;
};

// Bit mask of `qubit` inside a basis index for an n-qubit register.
constexpr std::size_t qubit_mask(int n_qubits, int qubit) noexcept {
    return std::size_t{1} << (n_qubits - 1 - qubit);
}

constexpr int bit_of(std::size_t index, int n_qubits, int qubit) noexcept {
    return (index & qubit_mask(n_qubits, qubit)) ? 1 : 0;
}

inline StateVector init_state(int n_qubits, int max_qubits = kMaxQubits) {
    if (n_qubits < 1 || n_qubits > max_qubits) {
        throw SizeError("n_qubits must lie in [1, " + std::to_string(max_qubits) + "], got " +
                        std::to_string(n_qubits));
    }
    return StateVector(n_qubits);
}

namespace detail {

inline void check_qubit(int n, int q) {
    if (q < 0 || q >= n) {
        throw IndexError("qubit index " + std::to_string(q) + " outside [0, " + std::to_string(n) + ")");
    }
}

} // namespace detail

// exp(-i angle P / 2) on `qubit`, P in {X, Y, Z}.
inline void apply_rotation(std::span<Complex> amps, int n, Axis axis, int qubit, double angle) {
    const std::size_t mask = qubit_mask(n, qubit);
    const std::size_t dim = amps.size();
    const double c = std::cos(0.5 * angle);
    const double s = std::sin(0.5 * angle);
    Complex* a = amps.data();
    switch (axis) {
    case Axis::X:
        // [[c, -is], [-is, c]]
        for (std::size_t hi = 0; hi < dim; hi += 2 * mask) {
            for (std::size_t i = hi; i < hi + mask; ++i) {
                const Complex a0 = a[i];
                const Complex a1 = a[i + mask];
                a[i] = Complex{c * a0.real() + s * a1.imag(), c * a0.imag() - s * a1.real()};
                a[i + mask] = Complex{c * a1.real() + s * a0.imag(), c * a1.imag() - s * a0.real()};
            }
        }
        break;
    case Axis::Y:
        // [[c, -s], [s, c]]
        for (std::size_t hi = 0; hi < dim; hi += 2 * mask) {
            for (std::size_t i = hi; i < hi + mask; ++i) {
                const Complex a0 = a[i];
                const Complex a1 = a[i + mask];
                a[i] = c * a0 - s * a1;
                a[i + mask] = s * a0 + c * a1;
            }
        }
        break;
    case Axis::Z: {
        // diag(e^{-i a/2}, e^{+i a/2})
        const Complex p0{c, -s};
        const Complex p1{c, s};
        for (std::size_t hi = 0; hi < dim; hi += 2 * mask) {
            for (std::size_t i = hi; i < hi + mask; ++i) {
                a[i] *= p0;
                a[i + mask] *= p1;
            }
        }
        break;
    }
    }
}

inline void apply_cnot(std::span<Complex> amps, int n, int control, int target) {
    const std::size_t cm = qubit_mask(n, control);
    const std::size_t tm = qubit_mask(n, target);
    for (std::size_t i = 0; i < amps.size(); ++i) {
        if ((i & cm) && !(i & tm)) std::swap(amps[i], amps[i | tm]);
    }
}

inline void apply_cz(std::span<Complex> amps, int n, int control, int target) {
    const std::size_t both = qubit_mask(n, control) | qubit_mask(n, target);
    for (std::size_t i = 0; i < amps.size(); ++i) {
        if ((i & both) == both) amps[i] = -amps[i];
    }
}

inline void apply(StateVector& state, const GateOp& gate) {
    const int n = state.n_qubits();
    detail::check_qubit(n, gate.target);
    switch (gate.kind) {
    case GateKind::RX: apply_rotation(state.amplitudes(), n, Axis::X, gate.target, gate.angle); return;
    case GateKind::RY: apply_rotation(state.amplitudes(), n, Axis::Y, gate.target, gate.angle); return;
    case GateKind::RZ: apply_rotation(state.amplitudes(), n, Axis::Z, gate.target, gate.angle); return;
    case GateKind::CNOT:
    case GateKind::CZ:
        if (!gate.control) throw IndexError("two-qubit gate requires a control qubit");
        detail::check_qubit(n, *gate.control);
        if (*gate.control == gate.target) throw IndexError("control and target must differ");
        if (gate.kind == GateKind::CNOT) {
            apply_cnot(state.amplitudes(), n, *gate.control, gate.target);
        } else {
            apply_cz(state.amplitudes(), n, *gate.control, gate.target);
        }
        return;
    }
}

inline StateVector apply_gate(StateVector state, const GateOp& gate) {
    apply(state, gate);
    return state;
}

inline std::vector<double> probabilities(const StateVector& state) {
    std::vector<double> p(state.dim());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(state[i]);
    return p;
}

inline double expectation_z(const StateVector& state, int qubit) {
    detail::check_qubit(state.n_qubits(), qubit);
    const std::size_t mask = qubit_mask(state.n_qubits(), qubit);
    double e = 0.0;
    for (std::size_t i = 0; i < state.dim(); ++i) {
        const double p = std::norm(state[i]);
        e += (i & mask) ? -p : p;
    }
    return e;
}

// All <Z_k>, k = 0..n-1, in one sweep.
inline std::vector<double> expectations_z(const StateVector& state) {
    const int n = state.n_qubits();
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    for (std::size_t i = 0; i < state.dim(); ++i) {
        const double p = std::norm(state[i]);
        for (int q = 0; q < n; ++q) e[q] += (i & qubit_mask(n, q)) ? -p : p;
    }
    return e;
}

// Im <lambda| P_qubit |phi>. With U = exp(-i t P / 2) applied last to phi and
// lambda = (downstream unitaries)^dagger H |psi>, d<H>/dt equals this value.
inline double pauli_overlap_imag(std::span<const Complex> lambda, std::span<const Complex> phi, int n, Axis axis,
                                 int qubit) {
    const std::size_t mask = qubit_mask(n, qubit);
    const std::size_t dim = phi.size();
    double acc = 0.0;
    for (std::size_t hi = 0; hi < dim; hi += 2 * mask) {
        for (std::size_t i = hi; i < hi + mask; ++i) {
            const Complex l0 = std::conj(lambda[i]);
            const Complex l1 = std::conj(lambda[i + mask]);
            const Complex p0 = phi[i];
            const Complex p1 = phi[i + mask];
            switch (axis) {
            case Axis::X: acc += (l0 * p1 + l1 * p0).imag(); break;
            case Axis::Y: acc += (l0 * Complex{0, -1} * p1 + l1 * Complex{0, 1} * p0).imag(); break;
            case Axis::Z: acc += (l0 * p0 - l1 * p1).imag(); break;
            }
        }
    }
    return acc;
}

// A sequence of CNOTs (a basis permutation) or CZs (a diagonal sign) folded
// into a single pass over the amplitudes.
class FusedEntangler {
public:
    FusedEntangler(int n_qubits, GateKind kind, std::span<const std::pair<int, int>> pairs)
        : n_(n_qubits), kind_(kind) {
        if (kind != GateKind::CNOT && kind != GateKind::CZ) {
            throw ConfigError("FusedEntangler accepts CNOT or CZ only");
        }
        for (const auto& [c, t] : pairs) {
            detail::check_qubit(n_, c);
            detail::check_qubit(n_, t);
            if (c == t) throw IndexError("control and target must differ");
        }
        empty_ = pairs.empty();
        const std::size_t dim = std::size_t{1} << n_;
        if (kind_ == GateKind::CZ) {
            sign_.assign(dim, 1.0);
            for (std::size_t i = 0; i < dim; ++i) {
                int parity = 0;
                for (const auto& [c, t] : pairs) parity ^= bit_of(i, n_, c) & bit_of(i, n_, t);
                if (parity) sign_[i] = -1.0;
            }
        } else {
            // Basis map f = f_k o ... o f_1; gather sources are f^{-1} (forward) and f (inverse).
            auto flip = [this](std::size_t b, std::pair<int, int> g) {
                return (b & qubit_mask(n_, g.first)) ? (b ^ qubit_mask(n_, g.second)) : b;
            };
            forward_src_.resize(dim);
            inverse_src_.resize(dim);
            for (std::size_t j = 0; j < dim; ++j) {
                std::size_t b = j;
                for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) b = flip(b, *it);
                forward_src_[j] = static_cast<std::uint32_t>(b);
                std::size_t f = j;
                for (const auto& g : pairs) f = flip(f, g);
                inverse_src_[j] = static_cast<std::uint32_t>(f);
            }
        }
    }

    [[nodiscard]] int n_qubits() const noexcept { return n_; }
    [[nodiscard]] GateKind kind() const noexcept { return kind_; }

    void apply(std::span<Complex> amps, std::vector<Complex>& scratch) const { run(amps, scratch, forward_src_); }
    void apply_inverse(std::span<Complex> amps, std::vector<Complex>& scratch) const {
        run(amps, scratch, inverse_src_);
    }

private:
    void run(std::span<Complex> amps, std::vector<Complex>& scratch, const std::vector<std::uint32_t>& src) const {
        if (empty_) return;
        if (kind_ == GateKind::CZ) {
            for (std::size_t i = 0; i < amps.size(); ++i) amps[i] *= sign_[i];
            return;
        }
        scratch.assign(amps.begin(), amps.end());
        for (std::size_t j = 0; j < amps.size(); ++j) amps[j] = scratch[src[j]];
    }

    int n_;
    GateKind kind_;
    bool empty_ = false;
    std::vector<double> sign_;
    std::vector<std::uint32_t> forward_src_;
    std::vector<std::uint32_t> inverse_src_;
};

} // namespace hqnn::qsim
