// hqnn: Stage-I sweeps, Stage-II architecture search and one-off evaluations.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hqnn/hqnn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw hqnn::MissingFileError("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw hqnn::ConfigError(path + ": " + e.what());
    }
}

// Flag values only win when the flag was given on the command line.
template <class T>
void override_if(const CLI::Option* opt, T& dst, const T& src) {
    if (opt->count() > 0) dst = src;
}

hqnn::GradientMethod method_or_throw(const std::string& s) {
    const auto m = hqnn::parse_method(s);
    if (!m) throw hqnn::ConfigError("--gradient must be 'adjoint' or 'shift'");
    return *m;
}

hqnn::TrainabilityScope scope_or_throw(const std::string& s) {
    const auto sc = hqnn::parse_scope(s);
    if (!sc) throw hqnn::ConfigError("--scope must be 'full' or 'quantum_only'");
    return *sc;
}

struct SelftestReport {
    int failures = 0;
    void check(bool ok, const std::string& what) {
        std::cout << (ok ? "ok   " : "FAIL ") << what << "\n";
        if (!ok) ++failures;
    }
};

// Quick internal consistency checks; exit 4 on any failure.
int selftest(std::uint64_t seed) {
    using namespace hqnn;
    SelftestReport r;
    Rng rng(seed);
    double worst_norm = 0.0, worst_grad = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        CircuitArchitecture a;
        a.n_qubits = 2 + static_cast<int>(uniform_index(rng, 3));
        a.depth = 1 + static_cast<int>(uniform_index(rng, 3));
        a.rotation_axes = sample_axes(rng, a.n_qubits);
        a.topology = Topology{pick(rng, kAllTopologies), rng()};
        a.entangler = pick(rng, kAllEntanglers);
        const PqcCircuit c(a);
        std::vector<double> theta(static_cast<std::size_t>(a.num_parameters()));
        std::vector<double> x(static_cast<std::size_t>(a.n_qubits));
        for (auto& t : theta) t = uniform_angle(rng);
        for (auto& t : x) t = uniform_real(rng, -3.0, 3.0);
        worst_norm = std::max(worst_norm, std::abs(c.prepare(theta, x).norm_squared() - 1.0));
        std::vector<double> up(static_cast<std::size_t>(a.n_qubits));
        for (auto& u : up) u = uniform_real(rng, -1.0, 1.0);
        const auto gs = c.gradients(GradientMethod::ParameterShift, theta, x, up, true);
        const auto ga = c.gradients(GradientMethod::Adjoint, theta, x, up, true);
        for (std::size_t i = 0; i < gs.theta.size(); ++i) worst_grad = std::max(worst_grad, std::abs(gs.theta[i] - ga.theta[i]));
        for (std::size_t i = 0; i < gs.angles.size(); ++i) worst_grad = std::max(worst_grad, std::abs(gs.angles[i] - ga.angles[i]));
    }
    r.check(worst_norm < 1e-9, "statevector norm preserved");
    r.check(worst_grad < 1e-10, "adjoint gradients agree with parameter shift");
    const std::vector<double> uniform(8, 0.125);
    r.check(std::abs(normalized_kl_to_uniform(uniform)) < 1e-12, "uniform distribution has zero KL");
    r.check(std::abs(*trainability(1e-3) - 3.0) < 1e-12, "trainability(1e-3) = 3");
    std::vector<ObjectiveVector> pop;
    for (int i = 0; i < 20; ++i) pop.push_back({uniform_real(rng, 0, 1), uniform_real(rng, 0, 1), uniform_real(rng, 0, 5)});
    const auto fronts = fast_non_dominated_sort(pop);
    bool clean = true;
    for (auto a : fronts[0])
        for (auto b : fronts[0]) clean = clean && !dominates(pop[a], pop[b]);
    r.check(clean, "front 0 holds no dominated pair");
    return r.failures == 0 ? kExitOk : kExitInvariant;
}

} // namespace

int main(int argc, char** argv) {
    using namespace hqnn;
    CLI::App app{"Hybrid quantum-classical network experiments: trainability/expressibility sweeps and NSGA-II search"};
    app.require_subcommand(1);

    std::string out_dir = default_output_dir().string();
    std::string config_path;
    int jobs = 1;

    // --- stage1
    auto* s1 = app.add_subcommand("stage1", "Sample circuit architectures and score them under each training configuration");
    Stage1Config s1c;
    std::string s1_gradient = "adjoint";
    s1->add_option("--config", config_path, "JSON config or manifest; flags override its values");
    s1->add_option("-o,--output", out_dir, "Output directory (default $HQNN_OUTPUT_DIR or ./hqnn_out)");
    auto* o_setting = s1->add_option("--setting", s1c.setting, "Search-space setting id (1-4)");
    auto* o_configs = s1->add_option("--configurations", s1c.configurations, "Configuration ids from {1,2,3}")->delimiter(',');
    auto* o_narch = s1->add_option("-n,--architectures", s1c.n_architectures, "Architectures to sample");
    auto* o_s1seed = s1->add_option("--seed", s1c.seed, "Global seed");
    auto* o_qubits = s1->add_option("--qubits", s1c.qubits, "Override qubit choices")->delimiter(',');
    auto* o_depths = s1->add_option("--depths", s1c.depths, "Override depth choices")->delimiter(',');
    auto* o_s1ep = s1->add_option("--epochs", s1c.epochs, "Training epochs");
    auto* o_s1bs = s1->add_option("--batch-size", s1c.batch_size, "Mini-batch size");
    auto* o_s1lr = s1->add_option("--lr", s1c.learning_rate, "Adam learning rate");
    auto* o_s1samples = s1->add_option("--samples", s1c.dataset_samples, "Synthetic dataset size");
    auto* o_s1noise = s1->add_option("--noise", s1c.noise, "Synthetic dataset noise");
    auto* o_s1expr = s1->add_option("--expr-samples", s1c.expressibility_samples, "Parameter samples for expressibility");
    auto* o_s1gb = s1->add_option("--grad-batch", s1c.gradient_batch, "Samples in the gradient-variance batch");
    auto* o_s1grad = s1->add_option("--gradient", s1_gradient, "Gradient method: adjoint or shift");
    s1->add_option("-j,--jobs", jobs, "Parallel evaluations");

    // --- nas
    auto* nas = app.add_subcommand(
        "nas", "NSGA-II search over hybrid genomes. Candidates train for 5 epochs by default; the text of the method "
               "describes 10, the algorithm listing 5. Use --epochs to choose.");
    NasRunConfig nc;
    std::string nas_scope = "full", nas_gradient = "adjoint";
    nas->add_option("--config", config_path, "JSON config or manifest; flags override its values");
    nas->add_option("-o,--output", out_dir, "Output directory (default $HQNN_OUTPUT_DIR or ./hqnn_out)");
    auto* o_scope = nas->add_option("--scope", nas_scope, "Trainability scope: full or quantum_only");
    auto* o_pop = nas->add_option("--population", nc.population, "Population size (even)");
    auto* o_gens = nas->add_option("--generations", nc.generations, "Generations");
    auto* o_nep = nas->add_option("--epochs", nc.eval.epochs, "Training epochs per candidate");
    auto* o_nbs = nas->add_option("--batch-size", nc.eval.batch_size, "Mini-batch size");
    auto* o_nlr = nas->add_option("--lr", nc.eval.learning_rate, "Adam learning rate");
    auto* o_nexpr = nas->add_option("--expr-samples", nc.eval.expressibility_samples, "Parameter samples for expressibility");
    auto* o_ngb = nas->add_option("--grad-batch", nc.eval.gradient_batch, "Samples in the gradient-variance batch");
    auto* o_ngrad = nas->add_option("--gradient", nas_gradient, "Gradient method: adjoint or shift");
    auto* o_images = nas->add_option("--images", nc.images, "IDX image file (optionally gzipped)");
    auto* o_labels = nas->add_option("--labels", nc.labels, "IDX label file (optionally gzipped)");
    auto* o_classes = nas->add_option("--classes", nc.classes, "Classes kept (lowest labels)");
    auto* o_per = nas->add_option("--per-class", nc.per_class, "Samples kept per class");
    auto* o_size = nas->add_option("--image-size", nc.image_size, "Downscale to this side length (0 keeps native)");
    auto* o_nseed = nas->add_option("--seed", nc.seed, "Global seed");
    nas->add_option("-j,--jobs", jobs, "Parallel evaluations");

    // --- eval-arch
    auto* ev = app.add_subcommand("eval-arch", "Evaluate a single circuit or genome descriptor and print metrics JSON");
    EvalArchConfig ec;
    std::string arch_path, ev_scope = "full", ev_gradient = "adjoint";
    ev->add_option("arch", arch_path, "Descriptor JSON file")->required();
    ev->add_option("--scope", ev_scope, "Trainability scope: full or quantum_only");
    ev->add_flag("--pure", ec.pure, "Evaluate a circuit descriptor as a standalone PQC");
    ev->add_option("--seed", ec.seed, "Seed");
    ev->add_option("--epochs", ec.epochs, "Training epochs");
    ev->add_option("--batch-size", ec.batch_size, "Mini-batch size");
    ev->add_option("--lr", ec.learning_rate, "Adam learning rate");
    ev->add_option("--samples", ec.dataset_samples, "Synthetic dataset size");
    ev->add_option("--expr-samples", ec.expressibility_samples, "Parameter samples for expressibility");
    ev->add_option("--grad-batch", ec.gradient_batch, "Samples in the gradient-variance batch");
    ev->add_option("--gradient", ev_gradient, "Gradient method: adjoint or shift");
    ev->add_option("--images", ec.images, "IDX image file for genome descriptors");
    ev->add_option("--labels", ec.labels, "IDX label file for genome descriptors");
    ev->add_option("--classes", ec.classes, "Classes kept");
    ev->add_option("--per-class", ec.per_class, "Samples kept per class");
    ev->add_option("--image-size", ec.image_size, "Downscale to this side length (0 keeps native)");

    // --- selftest
    auto* st = app.add_subcommand("selftest", "Run internal consistency checks");
    std::uint64_t st_seed = 7;
    st->add_option("--seed", st_seed, "Seed");

    // --- fixture
    auto* fx = app.add_subcommand("fixture", "Write a procedural glyph dataset in IDX format");
    int fx_classes = 10, fx_per = 100, fx_size = 28;
    std::uint64_t fx_seed = 0;
    fx->add_option("--classes", fx_classes, "Number of glyph classes (<= 10)");
    fx->add_option("--per-class", fx_per, "Images per class");
    fx->add_option("--size", fx_size, "Image side length");
    fx->add_option("--seed", fx_seed, "Seed");
    fx->add_option("-o,--output", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s1->parsed()) {
            Stage1Config cfg;
            if (!config_path.empty()) merge_config(config_section(read_json_file(config_path)), cfg);
            override_if(o_setting, cfg.setting, s1c.setting);
            override_if(o_configs, cfg.configurations, s1c.configurations);
            override_if(o_narch, cfg.n_architectures, s1c.n_architectures);
            override_if(o_s1seed, cfg.seed, s1c.seed);
            override_if(o_qubits, cfg.qubits, s1c.qubits);
            override_if(o_depths, cfg.depths, s1c.depths);
            override_if(o_s1ep, cfg.epochs, s1c.epochs);
            override_if(o_s1bs, cfg.batch_size, s1c.batch_size);
            override_if(o_s1lr, cfg.learning_rate, s1c.learning_rate);
            override_if(o_s1samples, cfg.dataset_samples, s1c.dataset_samples);
            override_if(o_s1noise, cfg.noise, s1c.noise);
            override_if(o_s1expr, cfg.expressibility_samples, s1c.expressibility_samples);
            override_if(o_s1gb, cfg.gradient_batch, s1c.gradient_batch);
            if (o_s1grad->count()) cfg.gradient_method = method_or_throw(s1_gradient);
            cfg.jobs = jobs;
            const auto out = run_stage1(cfg, out_dir);
            for (const auto& f : out.files) std::cout << "wrote " << f.string() << "\n";
            return kExitOk;
        }
        if (nas->parsed()) {
            NasRunConfig cfg;
            if (!config_path.empty()) merge_config(config_section(read_json_file(config_path)), cfg);
            if (o_scope->count()) cfg.scope = scope_or_throw(nas_scope);
            override_if(o_pop, cfg.population, nc.population);
            override_if(o_gens, cfg.generations, nc.generations);
            override_if(o_nep, cfg.eval.epochs, nc.eval.epochs);
            override_if(o_nbs, cfg.eval.batch_size, nc.eval.batch_size);
            override_if(o_nlr, cfg.eval.learning_rate, nc.eval.learning_rate);
            override_if(o_nexpr, cfg.eval.expressibility_samples, nc.eval.expressibility_samples);
            override_if(o_ngb, cfg.eval.gradient_batch, nc.eval.gradient_batch);
            if (o_ngrad->count()) cfg.eval.gradient_method = method_or_throw(nas_gradient);
            override_if(o_images, cfg.images, nc.images);
            override_if(o_labels, cfg.labels, nc.labels);
            override_if(o_classes, cfg.classes, nc.classes);
            override_if(o_per, cfg.per_class, nc.per_class);
            override_if(o_size, cfg.image_size, nc.image_size);
            override_if(o_nseed, cfg.seed, nc.seed);
            cfg.jobs = jobs;
            const auto out = run_nas(cfg, out_dir);
            std::cout << "front 0 (" << scope_name(cfg.scope) << " trainability), " << out.result.archive.size()
                      << " evaluations\n"
                      << pareto_table(out.result);
            std::cout << "wrote " << (fs::path(out_dir) / "pareto.json").string() << "\n";
            return kExitOk;
        }
        if (ev->parsed()) {
            ec.scope = scope_or_throw(ev_scope);
            ec.gradient_method = method_or_throw(ev_gradient);
            json descriptor;
            {
                std::ifstream f(arch_path);
                if (!f) throw MissingFileError("cannot open " + arch_path);
                try {
                    descriptor = json::parse(f);
                } catch (const json::parse_error& e) {
                    throw ConfigError(arch_path + ": " + e.what());
                }
            }
            std::cout << eval_arch(descriptor, ec).dump(2) << "\n";
            return kExitOk;
        }
        if (st->parsed()) return selftest(st_seed);
        if (fx->parsed()) {
            if (fx_classes < 1 || fx_classes > 10 || fx_per < 1 || fx_size < 8) {
                throw ConfigError("fixture needs 1-10 classes, >= 1 image per class and size >= 8");
            }
            const auto [images, labels] = generate_glyph_images(fx_classes, fx_per, fx_seed, fx_size);
            fs::create_directories(out_dir);
            const auto n = labels.size();
            write_idx(fs::path(out_dir) / "images.idx", fs::path(out_dir) / "labels.idx", images, labels, fx_size, fx_size);
            std::cout << "wrote " << n << " images to " << out_dir << "\n";
            return kExitOk;
        }
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingData;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violated: " << e.what() << "\n";
        return kExitInvariant;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid descriptor or config: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInvariant;
    }
    return kExitUsage;
}
