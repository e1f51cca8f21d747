// Command-line front end: probes, bootstrap triples, factorization chains,
// norm estimates, and full experiment runs, all driven by one config format.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsio/experiment.hpp"

namespace {

using nlohmann::json;

json vec_json(const bsio::Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.d; ++i) a.push_back(v[i]);
    return a;
}

json cube_json(const bsio::Cube& q) {
    return {{"corner", vec_json(q.corner)}, {"side", q.side}};
}

json triple_json(const bsio::CubeTriple& t) {
    json pairs = json::array();
    for (const auto& p : t.pairs)
        pairs.push_back({{"free_slot", p.free_slot},
                         {"oscillation_integral", p.oscillation_integral},
                         {"absolute_integral", p.absolute_integral},
                         {"signed_integral", p.signed_integral}});
    return {{"q0", cube_json(t.q0)},
            {"q1", cube_json(t.q1)},
            {"q2", cube_json(t.q2)},
            {"separation", t.separation},
            {"kernel_at_anchors", t.kernel_at_anchors},
            {"anchor_gauge", t.anchor_gauge},
            {"max_anchor_distance", t.max_anchor_distance},
            {"pairs", pairs}};
}

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "configuration file");
    sub->add_option("--out", args.out_path, "output path (overrides run.out)");
    sub->add_option("--seed", args.seed, "seed override (overrides run.seed)")
        ->each([&args](const std::string&) { args.seed_given = true; });
}

bsio::ConfigDoc load_doc(const CommonArgs& args) {
    bsio::ConfigDoc doc;
    if (!args.config_path.empty()) doc = bsio::ConfigDoc::load(args.config_path);
    if (args.seed_given) doc.set("run.seed", static_cast<std::int64_t>(args.seed));
    if (!args.out_path.empty()) doc.set("run.out", args.out_path);
    return doc;
}

void emit_json(const bsio::ConfigDoc& doc, const json& j) {
    const std::string out = doc.get_string("run.out", "");
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw bsio::validation_error("cannot write '" + out + "'");
    f << j.dump(2) << '\n';
    std::cout << "report written to " << out << '\n';
}

double resolve_separation(const bsio::ExperimentConfig& cfg, const bsio::KernelSpec& kernel) {
    if (!cfg.auto_separation) return cfg.separation;
    const bsio::Cube box = bsio::experiment_box(cfg);
    const bsio::Cube q1(box.corner, box.side / 4.0);
    const auto grid = bsio::DyadicGrid::standard(cfg.d);
    return bsio::calibrate_separation(kernel, q1, {grid, grid}).separation;
}

int run_probe_kernel(const bsio::ConfigDoc& doc) {
    const auto cfg = bsio::experiment_config_from(doc);
    const auto kernel = bsio::kernel_from(cfg);
    const bsio::Cube box = bsio::experiment_box(cfg);
    const int slot = static_cast<int>(doc.get_int("probe.slot", 1));
    const double scale = doc.get_double("probe.scale", box.side / 4.0);
    bsio::ProbeOptions opts;
    opts.accept_fraction = doc.get_double("probe.accept_fraction", 1e-3);
    const auto res = bsio::probe_nondegeneracy(kernel, box.center(), scale, slot, opts);
    emit_json(doc, {{"kernel", kernel.describe()},
                    {"anchor", vec_json(box.center())},
                    {"slot", slot},
                    {"scale", res.scale},
                    {"witness_value", res.witness_value},
                    {"x", vec_json(res.x)},
                    {"z", vec_json(res.z)},
                    {"kernel_evals", kernel.evals()}});
    return 0;
}

int run_bootstrap(const bsio::ConfigDoc& doc) {
    const auto cfg = bsio::experiment_config_from(doc);
    const auto kernel = bsio::kernel_from(cfg);
    const bsio::Cube box = bsio::experiment_box(cfg);
    const bsio::Cube q1(box.corner, box.side / 4.0);
    const auto grid = bsio::DyadicGrid::standard(cfg.d);
    bsio::BootstrapOptions opts;
    opts.quadrature_cells = static_cast<int>(doc.get_int("bootstrap.quadrature_cells", 16));
    opts.sweep_grid = static_cast<int>(doc.get_int("bootstrap.sweep_grid", 3));
    json j;
    if (cfg.auto_separation) {
        const auto cal = bsio::calibrate_separation(kernel, q1, {grid, grid}, 32.0, 4096.0, opts);
        j["doublings"] = cal.doublings;
        j["triple"] = triple_json(cal.triple);
    } else {
        const auto triple = bsio::bootstrap_cubes(kernel, q1, cfg.separation, {grid, grid}, opts);
        j["triple"] = triple_json(triple);
    }
    j["kernel"] = kernel.describe();
    j["kernel_evals"] = kernel.evals();
    emit_json(doc, j);
    return 0;
}

int run_awf(const bsio::ConfigDoc& doc) {
    const auto cfg = bsio::experiment_config_from(doc);
    const auto kernel = bsio::kernel_from(cfg);
    const bsio::Cube q1 = bsio::experiment_box(cfg);
    const double sep = resolve_separation(cfg, kernel);

    // The symbol has to cover the whole bootstrap triple, so it lives on a
    // window padded around the home cube; its cell count is the real cost.
    if (!bsio::detail::window_free_symbol(cfg.symbol_id))
        throw bsio::validation_error("awf: symbol '" + cfg.symbol_id +
                                     "' is tied to its sampling window; pick a window-free "
                                     "symbol");
    const bsio::Cube container = bsio::detail::padded_window(q1, cfg.h, sep + 2.0, "awf");
    const auto b = bsio::make_symbol(cfg.symbol_id, container, cfg.h,
                                     bsio::detail::pinned_symbol_params(cfg, q1));

    bsio::FactorizeOptions fo;
    fo.quadrature_blocks = cfg.quadrature_blocks;
    const auto res = bsio::oscillation_lower_bound(b, kernel, q1, sep, cfg.gamma, fo);
    emit_json(doc, {{"oscillation", res.oscillation},
                    {"bump", res.bump},
                    {"pairing_1", res.pairing_1},
                    {"pairing_2", res.pairing_2},
                    {"leftover", res.leftover},
                    {"identity_residual", res.identity_residual},
                    {"constant", res.constant},
                    {"shrink_ratio", res.shrink_ratio},
                    {"gamma", res.gamma},
                    {"separation", sep},
                    {"triple", triple_json(res.triple)},
                    {"kernel_evals", kernel.evals()}});
    return 0;
}

int run_norms(const bsio::ConfigDoc& doc) {
    const auto cfg = bsio::experiment_config_from(doc);
    const bsio::Cube box = bsio::experiment_box(cfg);
    const auto b = bsio::make_symbol(cfg.symbol_id, box, cfg.h, cfg.symbol);
    bsio::CubeSampler sampler{cfg.cube_k_min, cfg.cube_k_max, cfg.cube_stride, cfg.max_triples};

    json j;
    j["sup_norm"] = b.sup_norm();
    j["oscillation_on_box"] = bsio::oscillation(b, box);
    const auto bmo = bsio::bmo_norm_est(b, sampler);
    j["bmo_norm_est"] = {{"value", bmo.value},
                         {"witness", cube_json(bmo.witness)},
                         {"cubes_sampled", bmo.cubes_sampled}};
    const double sigma = 1.0 / cfg.p + 1.0 / cfg.q - 1.0 / cfg.r;
    const double alpha = static_cast<double>(cfg.d) * sigma;
    if (alpha > 0 && alpha <= 1.0) {
        const auto hol = bsio::holder_seminorm_est(b, alpha, sampler);
        j["holder_seminorm_est"] = {{"alpha", alpha},
                                    {"value", hol.value},
                                    {"witness", cube_json(hol.witness)}};
    }
    if (cfg.s) {
        const auto dls = bsio::dot_ls_norm(b, *cfg.s, box);
        j["dot_ls_norm"] = {{"s", *cfg.s}, {"value", dls.value}, {"witness", dls.witness}};
    }
    emit_json(doc, j);
    return 0;
}

int run_experiment_cmd(const bsio::ConfigDoc& doc) {
    const auto rep = bsio::run_experiment(doc);
    bsio::write_report_files(rep);
    const std::string out = rep.echo.get_string("run.out", "");
    if (out.empty())
        std::cout << bsio::report_to_json(rep).dump(2) << '\n';
    else
        std::cout << "report written to " << out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"discrete bilinear singular integral laboratory"};
    app.require_subcommand(1);

    CommonArgs probe_args, boot_args, awf_args, norms_args, exp_args;
    auto* probe = app.add_subcommand("probe-kernel", "kernel non-degeneracy witness");
    add_common(probe, probe_args);
    auto* boot = app.add_subcommand("bootstrap", "separated cube triple with sign control");
    add_common(boot, boot_args);
    auto* awf = app.add_subcommand("awf", "factorization chain and oscillation lower bound");
    add_common(awf, awf_args);
    auto* norms = app.add_subcommand("norms", "symbol norm estimates");
    add_common(norms, norms_args);
    auto* exp = app.add_subcommand("experiment", "full regime experiment with report");
    add_common(exp, exp_args);

    try {
        app.parse(argc, argv);
        if (probe->parsed()) return run_probe_kernel(load_doc(probe_args));
        if (boot->parsed()) return run_bootstrap(load_doc(boot_args));
        if (awf->parsed()) return run_awf(load_doc(awf_args));
        if (norms->parsed()) return run_norms(load_doc(norms_args));
        if (exp->parsed()) return run_experiment_cmd(load_doc(exp_args));
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const bsio::resource_error& e) {
        std::cerr << "resource: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
