#pragma once

// NSGA-II search over the joint classical-quantum genome space, minimizing
// (1 - accuracy, expressibility, trainability).

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hqnn/archspace.hpp"
#include "hqnn/data.hpp"
#include "hqnn/errors.hpp"
#include "hqnn/hybridnet.hpp"
#include "hqnn/metrics.hpp"
#include "hqnn/random.hpp"
#include "hqnn/trainer.hpp"

namespace hqnn {

enum class TrainabilityScope { Full, QuantumOnly };

inline std::string_view scope_name(TrainabilityScope s) { return s == TrainabilityScope::Full ? "full" : "quantum_only"; }

inline std::optional<TrainabilityScope> parse_scope(std::string_view s) {
    if (s == "full") return TrainabilityScope::Full;
    if (s == "quantum_only" || s == "quantum-only" || s == "quantum") return TrainabilityScope::QuantumOnly;
    return std::nullopt;
}

struct ObjectiveVector {
    double one_minus_accuracy = 1.0;
    double expressibility = 1.0;
    double trainability = 0.0;

    static constexpr std::size_t kCount = 3;

    [[nodiscard]] double operator[](std::size_t i) const {
        return i == 0 ? one_minus_accuracy : (i == 1 ? expressibility : trainability);
    }
    [[nodiscard]] bool finite() const {
        return std::isfinite(one_minus_accuracy) && std::isfinite(expressibility) && std::isfinite(trainability);
    }
    friend bool operator==(const ObjectiveVector&, const ObjectiveVector&) = default;
};

// Minimization: a <= b everywhere and a < b somewhere.
inline bool dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    bool strict = false;
    for (std::size_t i = 0; i < ObjectiveVector::kCount; ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

// Fronts of indices; front 0 is the non-dominated set.
inline std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::span<const ObjectiveVector> pop) {
    for (const auto& o : pop) {
        if (!o.finite()) throw ConfigError("non-dominated sort on an unevaluated individual");
    }
    const std::size_t n = pop.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (dominates(pop[p], pop[q])) {
                dominated[p].push_back(q);
            } else if (dominates(pop[q], pop[p])) {
                ++count[p];
            }
        }
        if (count[p] == 0) fronts[0].push_back(p);
    }
    while (!fronts.back().empty()) {
        std::vector<std::size_t> next;
        for (auto p : fronts.back()) {
            for (auto q : dominated[p]) {
                if (--count[q] == 0) next.push_back(q);
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

inline constexpr double kInfiniteCrowding = std::numeric_limits<double>::infinity();

// Standard NSGA-II crowding distance within one front.
inline std::vector<double> crowding_distance(std::span<const ObjectiveVector> front) {
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), kInfiniteCrowding);
        return dist;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t m = 0; m < ObjectiveVector::kCount; ++m) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return front[a][m] < front[b][m]; });
        dist[order.front()] = kInfiniteCrowding;
        dist[order.back()] = kInfiniteCrowding;
        const double range = front[order.back()][m] - front[order.front()][m];
        if (!(range > 0.0)) continue;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            dist[order[k]] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / range;
        }
    }
    return dist;
}

struct Ranked {
    int rank = 0;
    double crowding = 0.0;
};

// rank and crowding for every member of `pop`.
inline std::vector<Ranked> rank_population(std::span<const ObjectiveVector> pop) {
    std::vector<Ranked> out(pop.size());
    const auto fronts = fast_non_dominated_sort(pop);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        std::vector<ObjectiveVector> members;
        for (auto i : fronts[f]) members.push_back(pop[i]);
        const auto cd = crowding_distance(members);
        for (std::size_t k = 0; k < fronts[f].size(); ++k) out[fronts[f][k]] = {static_cast<int>(f), cd[k]};
    }
    return out;
}

// Binary tournament: lower rank, then larger crowding, then a coin flip.
inline std::size_t tournament_select(std::span<const Ranked> ranked, Rng& rng) {
    const std::size_t a = uniform_index(rng, ranked.size());
    const std::size_t b = uniform_index(rng, ranked.size());
    if (ranked[a].rank != ranked[b].rank) return ranked[a].rank < ranked[b].rank ? a : b;
    if (ranked[a].crowding != ranked[b].crowding) return ranked[a].crowding > ranked[b].crowding ? a : b;
    return coin_flip(rng) ? a : b;
}

namespace detail {

// Truncate or extend the axis string to n, extending with fresh draws.
inline void fit_axes(std::vector<Axis>& axes, int n, Rng& rng) {
    while (static_cast<int>(axes.size()) > n) axes.pop_back();
    while (static_cast<int>(axes.size()) < n) axes.push_back(kAllAxes[uniform_index(rng, kAllAxes.size())]);
}

} // namespace detail

// Uniform attribute-wise crossover producing a single child.
inline HybridGenome crossover(const HybridGenome& p1, const HybridGenome& p2, Rng& rng) {
    auto from = [&rng](const auto& a, const auto& b) { return coin_flip(rng) ? a : b; };
    HybridGenome c;
    c.conv1 = from(p1.conv1, p2.conv1);
    c.conv2 = from(p1.conv2, p2.conv2);
    c.activation = from(p1.activation, p2.activation);
    const bool n_from_first = coin_flip(rng);
    const auto& n_parent = n_from_first ? p1.quantum : p2.quantum;
    c.quantum.n_qubits = n_parent.n_qubits;
    c.quantum.rotation_axes = n_parent.rotation_axes;
    c.quantum.depth = from(p1.quantum.depth, p2.quantum.depth);
    c.quantum.topology = from(p1.quantum.topology, p2.quantum.topology);
    c.quantum.entangler = from(p1.quantum.entangler, p2.quantum.entangler);
    c.quantum.encoding = from(p1.quantum.encoding, p2.quantum.encoding);
    detail::fit_axes(c.quantum.rotation_axes, c.quantum.n_qubits, rng);
    return c;
}

inline constexpr double kMutationRate = 0.40;

// Each attribute resampled with probability p_m. The axis string counts as
// one attribute; a qubit-count change without axis resampling triggers fit_axes.
inline HybridGenome mutate(const HybridGenome& g, double p_m, Rng& rng) {
    HybridGenome c = g;
    auto maybe = [&](auto& field, auto&& draw) {
        if (coin_flip(rng, p_m)) field = draw();
    };
    auto channel = [&] { return kChannelChoices[uniform_index(rng, kChannelChoices.size())]; };
    auto kernel = [&] { return kKernelChoices[uniform_index(rng, kKernelChoices.size())]; };
    auto pool = [&] { return coin_flip(rng); };
    maybe(c.conv1.channels, channel);
    maybe(c.conv1.kernel, kernel);
    maybe(c.conv1.pool, pool);
    maybe(c.conv2.channels, channel);
    maybe(c.conv2.kernel, kernel);
    maybe(c.conv2.pool, pool);
    maybe(c.activation, [&] { return kAllActivations[uniform_index(rng, kAllActivations.size())]; });
    auto& q = c.quantum;
    maybe(q.n_qubits, [&] {
        return kNasMinQubits + static_cast<int>(uniform_index(rng, kNasMaxQubits - kNasMinQubits + 1));
    });
    maybe(q.depth, [&] { return kNasDepthChoices[uniform_index(rng, kNasDepthChoices.size())]; });
    maybe(q.topology, [&] { return Topology{kNasTopologies[uniform_index(rng, kNasTopologies.size())], 0}; });
    maybe(q.entangler, [&] { return kAllEntanglers[uniform_index(rng, kAllEntanglers.size())]; });
    maybe(q.encoding, [&] { return kAllAxes[uniform_index(rng, kAllAxes.size())]; });
    if (coin_flip(rng, p_m)) {
        q.rotation_axes = sample_axes(rng, q.n_qubits);
    } else {
        detail::fit_axes(q.rotation_axes, q.n_qubits, rng);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Candidate evaluation.

struct EvalSettings {
    int epochs = 5;
    int batch_size = 32;
    double learning_rate = 0.01;
    int expressibility_samples = 200;
    int gradient_batch = 100;
    GradientMethod gradient_method = GradientMethod::Adjoint;
};

struct EvaluationOutcome {
    ObjectiveVector objectives;   // trainability is NaN when degenerate or failed
    double accuracy = 0.0;
    double expressibility = 1.0;
    double variance = 0.0;
    std::size_t scope_size = 0;   // gradient components pooled into the variance
    bool degenerate = false;
    bool failed = false;
    std::string error;
};

inline std::vector<std::size_t> gradient_batch_indices(const LabeledDataset& ds, int batch, std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.train);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), static_cast<std::size_t>(batch)));
    return idx;
}

// Build, train and score one genome. Deterministic per seed.
inline EvaluationOutcome evaluate(const HybridGenome& genome, const LabeledDataset& ds, TrainabilityScope scope,
                                  std::uint64_t seed, const EvalSettings& settings = {}) {
    EvaluationOutcome out;
    try {
        const auto violations = validate(genome);
        if (!violations.empty()) throw ConfigError("invalid genome: " + violations.front());
        if (ds.height <= 0) throw ShapeError("NAS evaluation needs image data");
        auto model = make_conv_model(genome, ds.height, ds.width, ds.n_classes, derive_seed(seed, 1));
        TrainConfig tc;
        tc.configuration =
            scope == TrainabilityScope::Full ? Configuration::HybridFull : Configuration::HybridQuantumOnly;
        tc.epochs = settings.epochs;
        tc.batch_size = settings.batch_size;
        tc.learning_rate = settings.learning_rate;
        tc.seed = derive_seed(seed, 2);
        tc.gradient_method = settings.gradient_method;
        auto rec = train(std::move(model), ds, tc);
        const auto& trained = rec.model;

        out.accuracy = validation_accuracy(trained, ds);
        const auto inputs = ds.gather_features(ds.train);
        Rng erng(derive_seed(seed, 3));
        out.expressibility = expressibility_uniform_kl(
            trained.arch, [&trained](std::span<const double> x) { return encode(trained, x); }, inputs,
            settings.expressibility_samples, erng);

        const auto gidx = gradient_batch_indices(ds, settings.gradient_batch, derive_seed(seed, 4));
        const auto gx = ds.gather_features(gidx);
        const auto gy = ds.gather_labels(gidx);
        const auto grad = loss_and_grad(trained, gx, gy, tc.configuration, settings.gradient_method).second;
        out.scope_size = grad.scope_size();
        out.variance = pooled_variance(grad);
        const auto t = trainability(out.variance);
        out.degenerate = !t.has_value();
        out.objectives = {1.0 - out.accuracy, out.expressibility,
                          t.value_or(std::numeric_limits<double>::quiet_NaN())};
    } catch (const std::exception& e) {
        out = EvaluationOutcome{};
        out.failed = true;
        out.error = e.what();
        out.objectives = {1.0, 1.0, std::numeric_limits<double>::quiet_NaN()};
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Individual {
    HybridGenome genome;
    EvaluationOutcome outcome;
    ObjectiveVector objectives; // outcome objectives with the degenerate sentinel applied
    int rank = -1;
    double crowding = 0.0;
    std::uint64_t eval_seed = 0;
    int generation = 0;
    int slot = 0;
};

struct NsgaConfig {
    int population = 12;
    int generations = 8;
    std::uint64_t seed = 0;
    double mutation_rate = kMutationRate;
    int jobs = 1;
};

struct NsgaResult {
    std::vector<Individual> archive;                   // every evaluation, in (generation, slot) order
    std::vector<std::vector<std::size_t>> populations; // archive indices of P_0 .. P_G
    std::vector<std::vector<std::size_t>> merged;      // archive indices of R_1 .. R_G
    std::vector<std::size_t> pareto;                   // front 0 of P_G
};

using Evaluator = std::function<EvaluationOutcome(const HybridGenome&, std::uint64_t seed)>;

namespace detail {

inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> workers;
    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (failure) std::rethrow_exception(failure);
}

// Degenerate or failed candidates get (largest finite trainability in the archive) + 1.
inline void apply_sentinels(std::vector<Individual>& archive) {
    double worst = 0.0;
    bool any = false;
    for (const auto& ind : archive) {
        if (std::isfinite(ind.outcome.objectives.trainability)) {
            worst = any ? std::max(worst, ind.outcome.objectives.trainability) : ind.outcome.objectives.trainability;
            any = true;
        }
    }
    for (auto& ind : archive) {
        ind.objectives = ind.outcome.objectives;
        if (!std::isfinite(ind.objectives.trainability)) ind.objectives.trainability = worst + 1.0;
    }
}

inline std::vector<ObjectiveVector> objectives_of(const std::vector<Individual>& archive,
                                                  std::span<const std::size_t> idx) {
    std::vector<ObjectiveVector> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(archive[i].objectives);
    return out;
}

// Next population of size n from R by (rank, crowding). Within a tied
// crowding value, members holding a per-objective minimum of their front go first.
inline std::vector<std::size_t> select_survivors(const std::vector<Individual>& archive,
                                                 std::span<const std::size_t> merged, std::size_t n) {
    const auto objs = objectives_of(archive, merged);
    const auto fronts = fast_non_dominated_sort(objs);
    std::vector<std::size_t> next;
    for (const auto& front : fronts) {
        if (next.size() + front.size() <= n) {
            for (auto i : front) next.push_back(merged[i]);
            if (next.size() == n) break;
            continue;
        }
        std::vector<ObjectiveVector> members;
        for (auto i : front) members.push_back(objs[i]);
        const auto cd = crowding_distance(members);
        std::vector<bool> extreme(front.size(), false);
        for (std::size_t m = 0; m < ObjectiveVector::kCount; ++m) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < members.size(); ++k) {
                if (members[k][m] < members[best][m]) best = k;
            }
            extreme[best] = true;
        }
        std::vector<std::size_t> order(front.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (cd[a] != cd[b]) return cd[a] > cd[b];
            return extreme[a] && !extreme[b];
        });
        for (std::size_t k = 0; next.size() < n; ++k) next.push_back(merged[front[order[k]]]);
        break;
    }
    return next;
}

inline void assign_ranks(std::vector<Individual>& archive, std::span<const std::size_t> pop) {
    const auto ranked = rank_population(objectives_of(archive, pop));
    for (std::size_t k = 0; k < pop.size(); ++k) {
        archive[pop[k]].rank = ranked[k].rank;
        archive[pop[k]].crowding = ranked[k].crowding;
    }
}

} // namespace detail

// Per-candidate seeds depend on (run seed, generation, slot) only.
inline std::uint64_t candidate_seed(std::uint64_t run_seed, int generation, int slot) {
    return derive_seed(run_seed, static_cast<std::uint64_t>(generation) + 1, static_cast<std::uint64_t>(slot) + 1);
}

inline NsgaResult run_nsga2(const NsgaConfig& cfg, const Evaluator& evaluator) {
    if (cfg.population < 4 || cfg.population % 2 != 0) throw ConfigError("population must be even and >= 4");
    if (cfg.generations < 0) throw ConfigError("generations must be >= 0");
    NsgaResult res;
    Rng rng(derive_seed(cfg.seed, 0xA11CE));

    auto evaluate_batch = [&](std::vector<HybridGenome> genomes, int generation) {
        const std::size_t base = res.archive.size();
        for (std::size_t s = 0; s < genomes.size(); ++s) {
            Individual ind;
            ind.genome = std::move(genomes[s]);
            ind.generation = generation;
            ind.slot = static_cast<int>(s);
            ind.eval_seed = candidate_seed(cfg.seed, generation, ind.slot);
            res.archive.push_back(std::move(ind));
        }
        detail::parallel_for(res.archive.size() - base, cfg.jobs, [&](std::size_t k) {
            auto& ind = res.archive[base + k];
            ind.outcome = evaluator(ind.genome, ind.eval_seed);
        });
        detail::apply_sentinels(res.archive);
        std::vector<std::size_t> idx(res.archive.size() - base);
        std::iota(idx.begin(), idx.end(), base);
        return idx;
    };

    std::vector<HybridGenome> initial;
    for (int i = 0; i < cfg.population; ++i) initial.push_back(sample_genome(rng));
    auto pop = evaluate_batch(std::move(initial), 0);
    detail::assign_ranks(res.archive, pop);
    res.populations.push_back(pop);

    for (int g = 1; g <= cfg.generations; ++g) {
        const auto ranked = rank_population(detail::objectives_of(res.archive, pop));
        std::vector<HybridGenome> offspring;
        for (int k = 0; k < cfg.population; ++k) {
            const auto& a = res.archive[pop[tournament_select(ranked, rng)]].genome;
            const auto& b = res.archive[pop[tournament_select(ranked, rng)]].genome;
            offspring.push_back(mutate(crossover(a, b, rng), cfg.mutation_rate, rng));
        }
        auto kids = evaluate_batch(std::move(offspring), g);
        std::vector<std::size_t> merged(pop);
        merged.insert(merged.end(), kids.begin(), kids.end());
        res.merged.push_back(merged);
        pop = detail::select_survivors(res.archive, merged, static_cast<std::size_t>(cfg.population));
        detail::assign_ranks(res.archive, pop);
        res.populations.push_back(pop);
    }
    for (auto i : pop) {
        if (res.archive[i].rank == 0) res.pareto.push_back(i);
    }
    return res;
}

} // namespace hqnn
