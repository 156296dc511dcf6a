#pragma once

// Circuit and hybrid architecture descriptions, entanglement topologies,
// the Stage-I experimental settings and the joint NAS search space.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hqnn/errors.hpp"
#include "hqnn/qsim.hpp"
#include "hqnn/random.hpp"

namespace hqnn {

using qsim::Axis;

enum class TopologyKind { Linear, Paired, Circular, Random, Alternating, AllToAll, Star };

enum class Entangler { CNOT, CZ };

enum class Activation { ReLU, SiLU, Tanh };

inline constexpr std::array kAllTopologies{TopologyKind::Linear,      TopologyKind::Paired,   TopologyKind::Circular,
                                           TopologyKind::Random,      TopologyKind::Alternating,
                                           TopologyKind::AllToAll,    TopologyKind::Star};
inline constexpr std::array kAllAxes{Axis::X, Axis::Y, Axis::Z};
inline constexpr std::array kAllEntanglers{Entangler::CNOT, Entangler::CZ};
inline constexpr std::array kAllActivations{Activation::ReLU, Activation::SiLU, Activation::Tanh};

// Joint classical-quantum search space.
inline constexpr std::array kChannelChoices{2, 4, 8, 12, 16, 24, 32, 48, 64};
inline constexpr std::array kKernelChoices{3, 5};
inline constexpr int kNasMinQubits = 2;
inline constexpr int kNasMaxQubits = 12;
inline constexpr std::array kNasDepthChoices{5, 10, 15, 20, 25, 30, 35, 45, 50};
inline constexpr std::array kNasTopologies{TopologyKind::Linear,      TopologyKind::Paired,   TopologyKind::Circular,
                                           TopologyKind::Alternating, TopologyKind::AllToAll, TopologyKind::Star};

constexpr std::string_view topology_name(TopologyKind k) noexcept {
    switch (k) {
    case TopologyKind::Linear: return "linear";
    case TopologyKind::Paired: return "paired";
    case TopologyKind::Circular: return "circular";
    case TopologyKind::Random: return "random";
    case TopologyKind::Alternating: return "alternating";
    case TopologyKind::AllToAll: return "all_to_all";
    case TopologyKind::Star: return "star";
    }
    return "?";
}

// Report spelling used in result tables ("all-to-all").
inline std::string topology_label(TopologyKind k) {
    std::string s{topology_name(k)};
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
}

inline std::optional<TopologyKind> parse_topology(std::string_view s) {
    std::string norm{s};
    std::replace(norm.begin(), norm.end(), '-', '_');
    for (auto k : kAllTopologies) {
        if (norm == topology_name(k)) return k;
    }
    return std::nullopt;
}

constexpr std::string_view entangler_name(Entangler e) noexcept { return e == Entangler::CNOT ? "CNOT" : "CZ"; }

inline std::optional<Entangler> parse_entangler(std::string_view s) {
    if (s == "CNOT" || s == "cnot" || s == "CX") return Entangler::CNOT;
    if (s == "CZ" || s == "cz") return Entangler::CZ;
    return std::nullopt;
}

constexpr std::string_view activation_name(Activation a) noexcept {
    switch (a) {
    case Activation::ReLU: return "ReLU";
    case Activation::SiLU: return "SiLU";
    case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
    for (auto a : kAllActivations) {
        if (s == activation_name(a)) return a;
    }
    if (s == "relu") return Activation::ReLU;
    if (s == "silu") return Activation::SiLU;
    if (s == "Tanh") return Activation::Tanh;
    return std::nullopt;
}

struct Topology {
    TopologyKind kind = TopologyKind::Linear;
    std::uint64_t seed = 0; // consulted by the random kind only

    friend bool operator==(const Topology& a, const Topology& b) {
        return a.kind == b.kind && (a.kind != TopologyKind::Random || a.seed == b.seed);
    }
};

using QubitPair = std::pair<int, int>;

// Ordered (control, target) pairs for one entangling layer. Control is always
// the lower-indexed qubit. Only alternating depends on `layer`; only random
// depends on the seed (its pair set is fixed across layers).
inline std::vector<QubitPair> entanglement_pairs(const Topology& topology, int n, int layer) {
    if (n < 2) throw SizeError("entanglement requires at least 2 qubits");
    if (layer < 0) throw IndexError("layer index must be non-negative");
    std::vector<QubitPair> pairs;
    switch (topology.kind) {
    case TopologyKind::Linear:
        for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
        break;
    case TopologyKind::Paired:
        for (int i = 0; i + 1 < n; i += 2) pairs.emplace_back(i, i + 1);
        break;
    case TopologyKind::Circular:
        for (int i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);
        if (n > 2) pairs.emplace_back(0, n - 1);
        break;
    case TopologyKind::Alternating:
        for (int i = layer % 2; i + 1 < n; i += 2) pairs.emplace_back(i, i + 1);
        break;
    case TopologyKind::AllToAll:
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
        break;
    case TopologyKind::Star:
        for (int i = 1; i < n; ++i) pairs.emplace_back(0, i);
        break;
    case TopologyKind::Random: {
        std::vector<QubitPair> all;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) all.emplace_back(i, j);
        Rng rng(topology.seed);
        // Partial Fisher-Yates: first n-1 entries form a uniform sample without replacement.
        const std::size_t take = static_cast<std::size_t>(n - 1);
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t j = k + uniform_index(rng, all.size() - k);
            std::swap(all[k], all[j]);
        }
        pairs.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
        std::sort(pairs.begin(), pairs.end());
        break;
    }
    }
    return pairs;
}

struct CircuitArchitecture {
    int n_qubits = 2;
    int depth = 1;
    std::vector<Axis> rotation_axes; // one per qubit, reused each layer
    Topology topology{};
    Entangler entangler = Entangler::CNOT;
    Axis encoding = Axis::Y;

    [[nodiscard]] int num_parameters() const noexcept { return n_qubits * depth; }

    // theta is laid out layer-major: theta[layer * n + qubit].
    [[nodiscard]] static constexpr int param_index(int n, int layer, int qubit) noexcept { return layer * n + qubit; }

    friend bool operator==(const CircuitArchitecture&, const CircuitArchitecture&) = default;
};

// Throws ShapeError/SizeError when the architecture is not internally consistent.
inline void check_architecture(const CircuitArchitecture& a, int max_qubits = qsim::kMaxQubits) {
    if (a.n_qubits < 1 || a.n_qubits > max_qubits) throw SizeError("n_qubits out of range");
    if (a.depth < 0) throw SizeError("depth must be non-negative");
    if (static_cast<int>(a.rotation_axes.size()) != a.n_qubits) {
        throw ShapeError("rotation_axes length must equal n_qubits");
    }
}

// "RY-RX-RZ" rendering of the per-qubit rotation string.
inline std::string gate_string(std::span<const Axis> axes) {
    std::string s;
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (i) s += '-';
        s += qsim::axis_name(axes[i]);
    }
    return s;
}

inline std::string gate_string(const CircuitArchitecture& a) { return gate_string(a.rotation_axes); }

inline std::vector<Axis> parse_gate_string(std::string_view s) {
    std::vector<Axis> axes;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find('-', start);
        const auto tok = s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        const auto ax = qsim::parse_axis(tok);
        if (!ax) throw ConfigError("unknown rotation gate '" + std::string(tok) + "'");
        axes.push_back(*ax);
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return axes;
}

inline std::vector<Axis> sample_axes(Rng& rng, int n) {
    std::vector<Axis> axes(static_cast<std::size_t>(n));
    for (auto& a : axes) a = kAllAxes[uniform_index(rng, kAllAxes.size())];
    return axes;
}

struct ConvSpec {
    int channels = 8;
    int kernel = 3;
    bool pool = false;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct HybridGenome {
    ConvSpec conv1{};
    ConvSpec conv2{};
    Activation activation = Activation::ReLU;
    CircuitArchitecture quantum{};

    friend bool operator==(const HybridGenome&, const HybridGenome&) = default;
};

// Table I settings. Fixed dimensions carry a single choice.
struct Stage1Setting {
    int id = 1;
    std::vector<int> qubit_choices;
    std::vector<int> depth_choices;
    std::vector<TopologyKind> topology_choices;

    static Stage1Setting table(int id) {
        const std::vector<TopologyKind> all(kAllTopologies.begin(), kAllTopologies.end());
        switch (id) {
        case 1: return {1, {8, 10, 12}, {10}, {TopologyKind::Alternating}};
        case 2: return {2, {10}, {10}, all};
        case 3: return {3, {10}, {5, 10, 15, 20}, {TopologyKind::Alternating}};
        case 4: return {4, {8, 10, 12}, {5, 10, 15, 20}, all};
        default: throw ConfigError("unknown Stage-I setting " + std::to_string(id) + " (valid ids: 1, 2, 3, 4)");
        }
    }
};

// Entangler is CNOT and encoding is RY for every Stage-I architecture.
inline CircuitArchitecture sample_stage1_architecture(const Stage1Setting& setting, Rng& rng) {
    if (setting.qubit_choices.empty() || setting.depth_choices.empty() || setting.topology_choices.empty()) {
        throw ConfigError("Stage-I setting has an empty choice set");
    }
    CircuitArchitecture a;
    a.n_qubits = pick(rng, setting.qubit_choices);
    a.depth = pick(rng, setting.depth_choices);
    a.topology.kind = pick(rng, setting.topology_choices);
    a.topology.seed = rng();
    a.rotation_axes = sample_axes(rng, a.n_qubits);
    a.entangler = Entangler::CNOT;
    a.encoding = Axis::Y;
    return a;
}

inline ConvSpec sample_conv(Rng& rng) {
    ConvSpec c;
    c.channels = kChannelChoices[uniform_index(rng, kChannelChoices.size())];
    c.kernel = kKernelChoices[uniform_index(rng, kKernelChoices.size())];
    c.pool = coin_flip(rng);
    return c;
}

inline HybridGenome sample_genome(Rng& rng) {
    HybridGenome g;
    g.conv1 = sample_conv(rng);
    g.conv2 = sample_conv(rng);
    g.activation = kAllActivations[uniform_index(rng, kAllActivations.size())];
    auto& q = g.quantum;
    q.n_qubits = kNasMinQubits + static_cast<int>(uniform_index(rng, kNasMaxQubits - kNasMinQubits + 1));
    q.depth = kNasDepthChoices[uniform_index(rng, kNasDepthChoices.size())];
    q.topology = {kNasTopologies[uniform_index(rng, kNasTopologies.size())], 0};
    q.entangler = kAllEntanglers[uniform_index(rng, kAllEntanglers.size())];
    q.encoding = kAllAxes[uniform_index(rng, kAllAxes.size())];
    q.rotation_axes = sample_axes(rng, q.n_qubits);
    return g;
}

template <typename Range, typename T>
bool contains(const Range& r, const T& v) {
    return std::find(std::begin(r), std::end(r), v) != std::end(r);
}

// Every field of the genome outside its enumerated domain; empty means valid.
inline std::vector<std::string> validate(const HybridGenome& g) {
    std::vector<std::string> v;
    auto conv = [&v](const ConvSpec& c, const char* name) {
        if (!contains(kChannelChoices, c.channels)) {
            v.push_back(std::string(name) + ".channels=" + std::to_string(c.channels) +
                        " not in {2,4,8,12,16,24,32,48,64}");
        }
        if (!contains(kKernelChoices, c.kernel)) {
            v.push_back(std::string(name) + ".kernel=" + std::to_string(c.kernel) + " not in {3,5}");
        }
    };
    conv(g.conv1, "conv1");
    conv(g.conv2, "conv2");
    if (!contains(kAllActivations, g.activation)) v.emplace_back("activation not in {ReLU,SiLU,tanh}");
    const auto& q = g.quantum;
    if (q.n_qubits < kNasMinQubits || q.n_qubits > kNasMaxQubits) {
        v.push_back("quantum.n_qubits=" + std::to_string(q.n_qubits) + " not in {2..12}");
    }
    if (!contains(kNasDepthChoices, q.depth)) {
        v.push_back("quantum.depth=" + std::to_string(q.depth) + " not in {5,10,15,20,25,30,35,45,50}");
    }
    if (!contains(kNasTopologies, q.topology.kind)) {
        v.push_back("quantum.topology=" + std::string(topology_name(q.topology.kind)) +
                    " not in {linear,paired,circular,alternating,all_to_all,star}");
    }
    if (!contains(kAllEntanglers, q.entangler)) v.emplace_back("quantum.entangler not in {CNOT,CZ}");
    if (!contains(kAllAxes, q.encoding)) v.emplace_back("quantum.encoding not in {RX,RY,RZ}");
    if (static_cast<int>(q.rotation_axes.size()) != q.n_qubits) {
        v.push_back("quantum.axes length " + std::to_string(q.rotation_axes.size()) + " != n_qubits");
    }
    for (auto a : q.rotation_axes) {
        if (!contains(kAllAxes, a)) {
            v.emplace_back("quantum.axes contains a gate outside {RX,RY,RZ}");
            break;
        }
    }
    return v;
}

// --- JSON ------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const CircuitArchitecture& a) {
    j = nlohmann::json{{"n_qubits", a.n_qubits},
                       {"depth", a.depth},
                       {"axes", gate_string(a)},
                       {"topology", topology_name(a.topology.kind)},
                       {"entangler", entangler_name(a.entangler)},
                       {"encoding", qsim::axis_name(a.encoding)}};
    if (a.topology.kind == TopologyKind::Random) j["topology_seed"] = a.topology.seed;
}

inline void from_json(const nlohmann::json& j, CircuitArchitecture& a) {
    a.n_qubits = j.at("n_qubits").get<int>();
    a.depth = j.at("depth").get<int>();
    const auto& axes = j.at("axes");
    if (axes.is_string()) {
        a.rotation_axes = parse_gate_string(axes.get<std::string>());
    } else {
        a.rotation_axes.clear();
        for (const auto& s : axes) {
            const auto ax = qsim::parse_axis(s.get<std::string>());
            if (!ax) throw ConfigError("unknown rotation gate '" + s.get<std::string>() + "'");
            a.rotation_axes.push_back(*ax);
        }
    }
    const auto topo = parse_topology(j.at("topology").get<std::string>());
    if (!topo) throw ConfigError("unknown topology '" + j.at("topology").get<std::string>() + "'");
    a.topology = {*topo, j.value("topology_seed", std::uint64_t{0})};
    const auto ent = parse_entangler(j.value("entangler", std::string("CNOT")));
    if (!ent) throw ConfigError("unknown entangler '" + j.value("entangler", std::string()) + "'");
    a.entangler = *ent;
    const auto enc = qsim::parse_axis(j.value("encoding", std::string("RY")));
    if (!enc) throw ConfigError("unknown encoding '" + j.value("encoding", std::string()) + "'");
    a.encoding = *enc;
    check_architecture(a);
}

inline void to_json(nlohmann::json& j, const ConvSpec& c) {
    j = nlohmann::json{{"channels", c.channels}, {"kernel", c.kernel}, {"pool", c.pool}};
}

inline void from_json(const nlohmann::json& j, ConvSpec& c) {
    c.channels = j.at("channels").get<int>();
    c.kernel = j.at("kernel").get<int>();
    c.pool = j.at("pool").get<bool>();
}

inline void to_json(nlohmann::json& j, const HybridGenome& g) {
    j = nlohmann::json{{"conv1", g.conv1},
                       {"conv2", g.conv2},
                       {"activation", activation_name(g.activation)},
                       {"quantum", g.quantum}};
}

inline void from_json(const nlohmann::json& j, HybridGenome& g) {
    g.conv1 = j.at("conv1").get<ConvSpec>();
    g.conv2 = j.at("conv2").get<ConvSpec>();
    const auto act = parse_activation(j.at("activation").get<std::string>());
    if (!act) throw ConfigError("unknown activation '" + j.at("activation").get<std::string>() + "'");
    g.activation = *act;
    g.quantum = j.at("quantum").get<CircuitArchitecture>();
}

} // namespace hqnn
