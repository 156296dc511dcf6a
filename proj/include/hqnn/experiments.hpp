#pragma once

// Stage-I sweeps, Stage-II search and one-off evaluations, with the file
// outputs the command-line tool emits. Every run writes manifest.json holding
// the effective configuration, its hash and the global seed; feeding that
// manifest back through --config reproduces the outputs byte for byte.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hqnn/archspace.hpp"
#include "hqnn/data.hpp"
#include "hqnn/errors.hpp"
#include "hqnn/hybridnet.hpp"
#include "hqnn/metrics.hpp"
#include "hqnn/nas.hpp"
#include "hqnn/random.hpp"
#include "hqnn/trainer.hpp"

namespace hqnn {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitMissingData = 3, kExitInvariant = 4 };

// Raised when a post-condition the tool promises (e.g. a non-dominated Pareto
// file) does not hold.
struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

inline std::filesystem::path default_output_dir() {
    if (const char* env = std::getenv("HQNN_OUTPUT_DIR"); env && *env) return env;
    return "hqnn_out";
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + p.string());
    f << text;
}

inline std::string_view method_name(GradientMethod m) { return m == GradientMethod::Adjoint ? "adjoint" : "shift"; }

inline std::optional<GradientMethod> parse_method(std::string_view s) {
    if (s == "adjoint") return GradientMethod::Adjoint;
    if (s == "shift" || s == "parameter-shift" || s == "parameter_shift") return GradientMethod::ParameterShift;
    return std::nullopt;
}

// Accept either a bare config object or a manifest wrapping one.
inline const nlohmann::json& config_section(const nlohmann::json& j) {
    return j.contains("config") && j["config"].is_object() ? j["config"] : j;
}

// ===========================================================================
// Stage I

struct Stage1Config {
    int setting = 1;
    std::vector<int> configurations{1, 2, 3};
    int n_architectures = 10;
    std::uint64_t seed = 0;
    std::vector<int> qubits; // empty: the setting's own choices
    std::vector<int> depths;
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.01;
    int dataset_samples = 500;
    double noise = 0.15;
    int expressibility_samples = 200;
    int gradient_batch = 100;
    GradientMethod gradient_method = GradientMethod::Adjoint;
    int jobs = 1;
};

inline nlohmann::json to_json_config(const Stage1Config& c) {
    return {{"command", "stage1"},
            {"setting", c.setting},
            {"configurations", c.configurations},
            {"n_architectures", c.n_architectures},
            {"seed", c.seed},
            {"qubits", c.qubits},
            {"depths", c.depths},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"dataset_samples", c.dataset_samples},
            {"noise", c.noise},
            {"expressibility_samples", c.expressibility_samples},
            {"gradient_batch", c.gradient_batch},
            {"gradient_method", method_name(c.gradient_method)}};
}

inline void merge_config(const nlohmann::json& j, Stage1Config& c) {
    c.setting = j.value("setting", c.setting);
    c.configurations = j.value("configurations", c.configurations);
    c.n_architectures = j.value("n_architectures", c.n_architectures);
    c.seed = j.value("seed", c.seed);
    c.qubits = j.value("qubits", c.qubits);
    c.depths = j.value("depths", c.depths);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.dataset_samples = j.value("dataset_samples", c.dataset_samples);
    c.noise = j.value("noise", c.noise);
    c.expressibility_samples = j.value("expressibility_samples", c.expressibility_samples);
    c.gradient_batch = j.value("gradient_batch", c.gradient_batch);
    if (j.contains("gradient_method")) {
        const auto m = parse_method(j["gradient_method"].get<std::string>());
        if (!m) throw ConfigError("gradient_method must be 'adjoint' or 'shift'");
        c.gradient_method = *m;
    }
}

inline void check_config(const Stage1Config& c) {
    (void)Stage1Setting::table(c.setting); // throws on unknown ids
    if (c.configurations.empty()) throw ConfigError("at least one configuration is required");
    for (int id : c.configurations) (void)configuration_from_id(id);
    if (c.n_architectures < 1) throw ConfigError("n_architectures must be >= 1");
    for (int n : c.qubits) {
        if (n < 2 || n > qsim::kMaxQubits) throw ConfigError("qubit override outside [2, 14]");
    }
    for (int d : c.depths) {
        if (d < 1) throw ConfigError("depth override must be >= 1");
    }
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1 || c.expressibility_samples < 1 || c.gradient_batch < 2) {
        throw ConfigError("batch_size, expressibility_samples >= 1 and gradient_batch >= 2 required");
    }
    if (c.dataset_samples < 10) throw ConfigError("dataset_samples must be >= 10");
}

struct Stage1Settings {
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.01;
    int expressibility_samples = 200;
    int gradient_batch = 100;
    GradientMethod gradient_method = GradientMethod::Adjoint;
};

// Train one architecture under one configuration and measure it. The
// trainability scope is theta for configurations 1 and 3, theta and phi for 2.
// Configurations 2 and 3 start from the same initial parameters.
inline MetricRow evaluate_stage1(const CircuitArchitecture& arch, Configuration config, const LabeledDataset& ds,
                                 std::uint64_t seed, const Stage1Settings& s) {
    auto model = config == Configuration::PurePqc ? make_pure_model(arch, derive_seed(seed, 1))
                                                  : make_dense_model(arch, derive_seed(seed, 1));
    TrainConfig tc;
    tc.configuration = config;
    tc.epochs = s.epochs;
    tc.batch_size = s.batch_size;
    tc.learning_rate = s.learning_rate;
    tc.seed = derive_seed(seed, 2);
    tc.gradient_method = s.gradient_method;
    const auto rec = train(std::move(model), ds, tc);
    const auto& m = rec.model;

    MetricRow row;
    row.arch = arch;
    row.configuration = static_cast<int>(config);
    row.seed = seed;
    row.metrics.accuracy = rec.val_accuracy_history.back();
    const auto inputs = ds.gather_features(ds.train);
    Rng erng(derive_seed(seed, 3));
    row.metrics.expressibility = expressibility_uniform_kl(
        arch, [&m](std::span<const double> x) { return encode(m, x); }, inputs, s.expressibility_samples, erng);
    const auto gidx = gradient_batch_indices(ds, s.gradient_batch, derive_seed(seed, 4));
    const auto gx = ds.gather_features(gidx);
    const auto gy = ds.gather_labels(gidx);
    row.variance = gradient_variance(m, config, gx, gy, s.gradient_method);
    row.metrics.trainability = trainability(row.variance);
    if (!row.metrics.trainability) {
        std::cerr << "warning: degenerate gradient variance for architecture seed " << seed << "\n";
    }
    return row;
}

struct Stage1Output {
    std::vector<std::filesystem::path> files;
    std::vector<std::vector<MetricRow>> rows; // one block per requested configuration
};

inline std::filesystem::path stage1_csv_name(int setting, int configuration) {
    return "stage1_setting" + std::to_string(setting) + "_config" + std::to_string(configuration) + ".csv";
}

inline std::vector<CircuitArchitecture> stage1_architectures(const Stage1Config& c) {
    auto setting = Stage1Setting::table(c.setting);
    if (!c.qubits.empty()) setting.qubit_choices = c.qubits;
    if (!c.depths.empty()) setting.depth_choices = c.depths;
    Rng rng(derive_seed(c.seed, 0x51, static_cast<std::uint64_t>(c.setting)));
    std::vector<CircuitArchitecture> archs;
    for (int i = 0; i < c.n_architectures; ++i) archs.push_back(sample_stage1_architecture(setting, rng));
    return archs;
}

inline Stage1Output run_stage1(const Stage1Config& c, const std::filesystem::path& out_dir) {
    check_config(c);
    const auto ds = generate_synthetic(static_cast<std::size_t>(c.dataset_samples), c.noise, derive_seed(c.seed, 0xDA7A));
    const auto archs = stage1_architectures(c);
    const Stage1Settings s{c.epochs, c.batch_size, c.learning_rate, c.expressibility_samples, c.gradient_batch,
                           c.gradient_method};
    Stage1Output out;
    std::filesystem::create_directories(out_dir);
    const auto cfg_json = to_json_config(c);
    for (int cid : c.configurations) {
        std::vector<MetricRow> rows(archs.size());
        detail::parallel_for(archs.size(), c.jobs, [&](std::size_t i) {
            const auto arch_seed = derive_seed(c.seed, 0xA5C4, i);
            rows[i] = evaluate_stage1(archs[i], configuration_from_id(cid), ds, arch_seed, s);
            rows[i].arch_id = static_cast<int>(i);
            rows[i].setting = c.setting;
        });
        std::string csv = std::string(kMetricCsvHeader) + "\n";
        for (const auto& r : rows) csv += csv_line(r) + "\n";
        const auto path = out_dir / stage1_csv_name(c.setting, cid);
        write_text(path, csv);
        out.files.push_back(path);
        out.rows.push_back(std::move(rows));
    }
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : out.files) files.push_back(f.filename().string());
    nlohmann::json manifest{{"config", cfg_json},
                            {"config_hash", config_hash(cfg_json)},
                            {"global_seed", c.seed},
                            {"dataset", manifest_json(ds)},
                            {"files", files},
                            {"csv_schema", kMetricCsvHeader}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return out;
}

// ===========================================================================
// Stage II

struct NasRunConfig {
    TrainabilityScope scope = TrainabilityScope::Full;
    int population = 12;
    int generations = 8;
    EvalSettings eval{};
    std::string images;
    std::string labels;
    int classes = 10;
    int per_class = 400;
    int image_size = 0; // 0 keeps the native resolution
    std::uint64_t seed = 0;
    int jobs = 1;
};

inline nlohmann::json to_json_config(const NasRunConfig& c) {
    return {{"command", "nas"},
            {"scope", scope_name(c.scope)},
            {"population", c.population},
            {"generations", c.generations},
            {"epochs", c.eval.epochs},
            {"batch_size", c.eval.batch_size},
            {"learning_rate", c.eval.learning_rate},
            {"expressibility_samples", c.eval.expressibility_samples},
            {"gradient_batch", c.eval.gradient_batch},
            {"gradient_method", method_name(c.eval.gradient_method)},
            {"images", c.images},
            {"labels", c.labels},
            {"classes", c.classes},
            {"per_class", c.per_class},
            {"image_size", c.image_size},
            {"seed", c.seed}};
}

inline void merge_config(const nlohmann::json& j, NasRunConfig& c) {
    if (j.contains("scope")) {
        const auto s = parse_scope(j["scope"].get<std::string>());
        if (!s) throw ConfigError("scope must be 'full' or 'quantum_only'");
        c.scope = *s;
    }
    c.population = j.value("population", c.population);
    c.generations = j.value("generations", c.generations);
    c.eval.epochs = j.value("epochs", c.eval.epochs);
    c.eval.batch_size = j.value("batch_size", c.eval.batch_size);
    c.eval.learning_rate = j.value("learning_rate", c.eval.learning_rate);
    c.eval.expressibility_samples = j.value("expressibility_samples", c.eval.expressibility_samples);
    c.eval.gradient_batch = j.value("gradient_batch", c.eval.gradient_batch);
    if (j.contains("gradient_method")) {
        const auto m = parse_method(j["gradient_method"].get<std::string>());
        if (!m) throw ConfigError("gradient_method must be 'adjoint' or 'shift'");
        c.eval.gradient_method = *m;
    }
    c.images = j.value("images", c.images);
    c.labels = j.value("labels", c.labels);
    c.classes = j.value("classes", c.classes);
    c.per_class = j.value("per_class", c.per_class);
    c.image_size = j.value("image_size", c.image_size);
    c.seed = j.value("seed", c.seed);
}

inline void check_config(const NasRunConfig& c) {
    if (c.population < 4 || c.population % 2) throw ConfigError("population must be even and >= 4");
    if (c.generations < 0) throw ConfigError("generations must be >= 0");
    if (c.eval.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.classes < 2 || c.per_class < 1) throw ConfigError("need >= 2 classes and >= 1 sample per class");
    if (c.image_size < 0) throw ConfigError("image_size must be >= 0");
    if (c.images.empty() || c.labels.empty()) throw ConfigError("--images and --labels are required");
}

inline LabeledDataset load_image_dataset(const std::string& images, const std::string& labels, int classes,
                                         int per_class, int image_size, std::uint64_t seed) {
    auto raw = load_idx(images, labels);
    auto ds = stratified_subset(raw, classes, static_cast<std::size_t>(per_class), derive_seed(seed, 0xDA7A));
    if (image_size > 0 && image_size != ds.height) ds = downscale(ds, image_size);
    return ds;
}

// One row per front member, columns as in the paper-style result tables.
inline nlohmann::json pareto_entry(const Individual& ind) {
    const auto& q = ind.genome.quantum;
    return {{"n", q.n_qubits},
            {"gates", gate_string(q)},
            {"topology", topology_label(q.topology.kind)},
            {"entangler", entangler_name(q.entangler)},
            {"depth", q.depth},
            {"accuracy", ind.outcome.accuracy},
            {"trainability", ind.objectives.trainability},
            {"expressibility", ind.outcome.expressibility},
            {"encoding", qsim::axis_name(q.encoding)},
            {"conv1", ind.genome.conv1},
            {"conv2", ind.genome.conv2},
            {"activation", activation_name(ind.genome.activation)},
            {"objectives", {ind.objectives.one_minus_accuracy, ind.objectives.expressibility, ind.objectives.trainability}},
            {"variance", ind.outcome.variance},
            {"scope_size", ind.outcome.scope_size},
            {"degenerate", ind.outcome.degenerate},
            {"seed", ind.eval_seed},
            {"generation", ind.generation}};
}

inline nlohmann::json archive_entry(const Individual& ind) {
    nlohmann::json j{{"generation", ind.generation},
                     {"slot", ind.slot},
                     {"seed", ind.eval_seed},
                     {"genome", ind.genome},
                     {"objectives",
                      {{"one_minus_accuracy", ind.objectives.one_minus_accuracy},
                       {"expressibility", ind.objectives.expressibility},
                       {"trainability", ind.objectives.trainability}}},
                     {"accuracy", ind.outcome.accuracy},
                     {"variance", ind.outcome.variance},
                     {"scope_size", ind.outcome.scope_size},
                     {"degenerate", ind.outcome.degenerate},
                     {"failed", ind.outcome.failed}};
    if (ind.outcome.failed) j["error"] = ind.outcome.error;
    return j;
}

inline void check_front(const std::vector<ObjectiveVector>& front) {
    for (std::size_t a = 0; a < front.size(); ++a)
        for (std::size_t b = 0; b < front.size(); ++b)
            if (a != b && dominates(front[a], front[b])) {
                throw InvariantViolation("Pareto front contains a dominated member");
            }
}

inline std::string pareto_table(const NsgaResult& res) {
    std::vector<std::size_t> order(res.pareto);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return res.archive[a].outcome.accuracy < res.archive[b].outcome.accuracy;
    });
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %-40s %-12s %-8s %-6s %-9s %-12s %-14s\n", "Qubits", "Parameterized Gates",
                  "Ent.Topology", "Ent.Gate", "Depth", "Accuracy", "Trainability", "Expressibility");
    os << buf;
    for (auto i : order) {
        const auto& ind = res.archive[i];
        const auto& q = ind.genome.quantum;
        std::snprintf(buf, sizeof buf, "%-6d %-40s %-12s %-8s %-6d %-9.4f %-12.4f %-14.4f\n", q.n_qubits,
                      gate_string(q).c_str(), topology_label(q.topology.kind).c_str(),
                      std::string(entangler_name(q.entangler)).c_str(), q.depth, ind.outcome.accuracy,
                      ind.objectives.trainability, ind.outcome.expressibility);
        os << buf;
    }
    return os.str();
}

struct NasOutput {
    NsgaResult result;
    LabeledDataset dataset;
};

inline NasOutput run_nas(const NasRunConfig& c, const std::filesystem::path& out_dir) {
    check_config(c);
    NasOutput out;
    out.dataset = load_image_dataset(c.images, c.labels, c.classes, c.per_class, c.image_size, c.seed);
    const auto& ds = out.dataset;
    NsgaConfig nc{c.population, c.generations, c.seed, kMutationRate, c.jobs};
    out.result = run_nsga2(nc, [&](const HybridGenome& g, std::uint64_t seed) {
        auto o = evaluate(g, ds, c.scope, seed, c.eval);
        if (o.failed) std::cerr << "warning: candidate evaluation failed: " << o.error << "\n";
        if (o.degenerate) std::cerr << "warning: degenerate gradient variance, trainability sentinel applied\n";
        return o;
    });
    const auto& res = out.result;

    std::vector<ObjectiveVector> front;
    for (auto i : res.pareto) front.push_back(res.archive[i].objectives);
    check_front(front);

    std::filesystem::create_directories(out_dir);
    const auto cfg_json = to_json_config(c);
    const auto hash = config_hash(cfg_json);

    std::string archive;
    for (const auto& ind : res.archive) archive += archive_entry(ind).dump() + "\n";
    write_text(out_dir / "archive.jsonl", archive);

    nlohmann::json pareto{{"scope", scope_name(c.scope)},
                          {"config_hash", hash},
                          {"global_seed", c.seed},
                          {"evaluations", res.archive.size()},
                          {"front", nlohmann::json::array()}};
    for (auto i : res.pareto) pareto["front"].push_back(pareto_entry(res.archive[i]));
    write_text(out_dir / "pareto.json", pareto.dump(2) + "\n");

    std::vector<bool> on_front(res.archive.size(), false);
    for (auto i : res.pareto) on_front[i] = true;
    std::string csv = "generation,slot,seed,n,depth,topology,entangler,encoding,gates,conv1_channels,conv1_kernel,"
                      "conv1_pool,conv2_channels,conv2_kernel,conv2_pool,activation,accuracy,expressibility,"
                      "trainability,variance,scope_size,degenerate,failed,pareto\n";
    for (std::size_t i = 0; i < res.archive.size(); ++i) {
        const auto& ind = res.archive[i];
        const auto& g = ind.genome;
        const auto& q = g.quantum;
        csv += std::to_string(ind.generation) + "," + std::to_string(ind.slot) + "," + std::to_string(ind.eval_seed) +
               "," + std::to_string(q.n_qubits) + "," + std::to_string(q.depth) + "," +
               std::string(topology_name(q.topology.kind)) + "," + std::string(entangler_name(q.entangler)) + "," +
               std::string(qsim::axis_name(q.encoding)) + "," + gate_string(q) + "," +
               std::to_string(g.conv1.channels) + "," + std::to_string(g.conv1.kernel) + "," +
               std::to_string(g.conv1.pool ? 1 : 0) + "," + std::to_string(g.conv2.channels) + "," +
               std::to_string(g.conv2.kernel) + "," + std::to_string(g.conv2.pool ? 1 : 0) + "," +
               std::string(activation_name(g.activation)) + "," + format_real(ind.outcome.accuracy) + "," +
               format_real(ind.outcome.expressibility) + "," + format_real(ind.objectives.trainability) + "," +
               format_real(ind.outcome.variance) + "," + std::to_string(ind.outcome.scope_size) + "," +
               std::to_string(ind.outcome.degenerate ? 1 : 0) + "," + std::to_string(ind.outcome.failed ? 1 : 0) +
               "," + std::to_string(on_front[i] ? 1 : 0) + "\n";
    }
    write_text(out_dir / "summary.csv", csv);

    nlohmann::json manifest{{"config", cfg_json},
                            {"config_hash", hash},
                            {"global_seed", c.seed},
                            {"dataset", manifest_json(ds)},
                            {"files", {"archive.jsonl", "pareto.json", "summary.csv"}}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return out;
}

// ===========================================================================
// One-off evaluation

struct EvalArchConfig {
    TrainabilityScope scope = TrainabilityScope::Full;
    bool pure = false; // circuit descriptors only: evaluate as a standalone PQC
    std::uint64_t seed = 0;
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.01;
    int dataset_samples = 500;
    double noise = 0.15;
    int expressibility_samples = 200;
    int gradient_batch = 100;
    GradientMethod gradient_method = GradientMethod::Adjoint;
    std::string images; // required for genome descriptors
    std::string labels;
    int classes = 10;
    int per_class = 400;
    int image_size = 0;
};

// A circuit descriptor ({n_qubits, depth, axes, ...}) is evaluated as the
// Stage-I dense hybrid (or pure PQC) on the synthetic set; a genome
// descriptor ({conv1, conv2, activation, quantum}) as a NAS candidate on IDX data.
inline nlohmann::json eval_arch(const nlohmann::json& descriptor, const EvalArchConfig& c) {
    nlohmann::json out{{"seed", c.seed}};
    if (descriptor.contains("quantum")) {
        const auto genome = descriptor.get<HybridGenome>();
        const auto violations = validate(genome);
        if (!violations.empty()) throw ConfigError("invalid genome: " + violations.front());
        if (c.images.empty() || c.labels.empty()) {
            throw MissingFileError("genome descriptors need --images and --labels");
        }
        const auto ds = load_image_dataset(c.images, c.labels, c.classes, c.per_class, c.image_size, c.seed);
        EvalSettings es{c.epochs, c.batch_size, c.learning_rate, c.expressibility_samples, c.gradient_batch,
                        c.gradient_method};
        const auto o = evaluate(genome, ds, c.scope, c.seed, es);
        if (o.failed) throw std::runtime_error("evaluation failed: " + o.error);
        out["genome"] = genome;
        out["scope"] = scope_name(c.scope);
        out["accuracy"] = o.accuracy;
        out["expressibility"] = o.expressibility;
        out["trainability"] = o.degenerate ? nlohmann::json(nullptr) : nlohmann::json(o.objectives.trainability);
        out["variance"] = o.variance;
        out["scope_size"] = o.scope_size;
        return out;
    }
    const auto arch = descriptor.get<CircuitArchitecture>();
    const auto ds = generate_synthetic(static_cast<std::size_t>(c.dataset_samples), c.noise, derive_seed(c.seed, 0xDA7A));
    const Configuration config = c.pure ? Configuration::PurePqc
                                        : (c.scope == TrainabilityScope::Full ? Configuration::HybridFull
                                                                              : Configuration::HybridQuantumOnly);
    const Stage1Settings s{c.epochs, c.batch_size, c.learning_rate, c.expressibility_samples, c.gradient_batch,
                           c.gradient_method};
    const auto row = evaluate_stage1(arch, config, ds, c.seed, s);
    out["architecture"] = arch;
    out["gates"] = gate_string(arch);
    out["configuration"] = configuration_name(config);
    out["accuracy"] = row.metrics.accuracy;
    out["expressibility"] = row.metrics.expressibility;
    out["trainability"] = row.metrics.trainability ? nlohmann::json(*row.metrics.trainability) : nlohmann::json(nullptr);
    out["variance"] = row.variance;
    return out;
}

} // namespace hqnn
