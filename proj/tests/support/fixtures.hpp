#pragma once

#include <vector>

#include "hqnn/archspace.hpp"
#include "hqnn/random.hpp"

namespace fixture {

inline hqnn::CircuitArchitecture random_arch(hqnn::Rng& rng, int min_n, int max_n, int min_depth, int max_depth) {
    hqnn::CircuitArchitecture a;
    a.n_qubits = min_n + static_cast<int>(hqnn::uniform_index(rng, static_cast<std::size_t>(max_n - min_n + 1)));
    a.depth = min_depth + static_cast<int>(hqnn::uniform_index(rng, static_cast<std::size_t>(max_depth - min_depth + 1)));
    a.rotation_axes = hqnn::sample_axes(rng, a.n_qubits);
    a.topology = hqnn::Topology{hqnn::pick(rng, hqnn::kAllTopologies), rng()};
    a.entangler = hqnn::pick(rng, hqnn::kAllEntanglers);
    a.encoding = hqnn::pick(rng, hqnn::kAllAxes);
    return a;
}

inline std::vector<double> random_vector(hqnn::Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = hqnn::uniform_real(rng, lo, hi);
    return v;
}

} // namespace fixture
