#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hierflow/baselines.hpp"
#include "hierflow/errors.hpp"
#include "hierflow/hierarchy.hpp"
#include "hierflow/io_util.hpp"
#include "hierflow/synthetic.hpp"
#include "hierflow/train.hpp"

namespace hf = hierflow;

namespace {

struct CommonOpts {
    std::string config_file;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

// CLI flags override config-file values which override defaults.
hf::ModelConfig resolve_config(const CommonOpts& opts, const CLI::App& cmd) {
    hf::ModelConfig cfg;
    if (!opts.config_file.empty()) cfg = hf::ModelConfig::load(opts.config_file);
    const auto u = [&](const char* flag, std::size_t& out) {
        const CLI::Option* o = cmd.get_option_no_throw(flag);
        if (o && o->count()) out = o->as<std::size_t>();
    };
    u("--lookback", cfg.lookback);
    u("--horizon", cfg.horizon);
    u("--window", cfg.window);
    u("--stride", cfg.stride);
    u("--embed-dim", cfg.embed_dim);
    u("--depth-kernel", cfg.depth_kernel);
    u("--channels", cfg.channels);
    u("--top-k", cfg.top_k);
    u("--clusters", cfg.clusters);
    u("--epochs", cfg.epochs);
    u("--batch-size", cfg.batch_size);
    u("--gru-hidden", cfg.gru_hidden);
    u("--slots-per-day", cfg.slots_per_day);
    const CLI::Option* lr = cmd.get_option_no_throw("--learning-rate");
    if (lr && lr->count()) cfg.learning_rate = lr->as<double>();
    const CLI::Option* pl = cmd.get_option_no_throw("--prediction-layer");
    if (pl && pl->count()) cfg.prediction_layer = pl->as<std::string>();
    cfg.seed = hf::resolve_seed(opts.seed_set, opts.seed);
    cfg.validate();
    return cfg;
}

void add_config_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_file, "JSON config file");
    cmd->add_option("--seed", opts.seed, "RNG seed (default: HIERFLOW_SEED env, then 42)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--lookback", "input window length L");
    cmd->add_option("--horizon", "forecast horizon T");
    cmd->add_option("--window", "patch window W");
    cmd->add_option("--stride", "patch stride S");
    cmd->add_option("--embed-dim", "patch embedding size D");
    cmd->add_option("--depth-kernel", "depthwise kernel size Q");
    cmd->add_option("--channels", "pointwise output channels A");
    cmd->add_option("--top-k", "similarity graph degree K");
    cmd->add_option("--clusters", "number of middle-layer clusters");
    cmd->add_option("--prediction-layer", "bottom | bottom_top | all");
    cmd->add_option("--epochs", "training epochs per phase");
    cmd->add_option("--batch-size", "mini-batch size");
    cmd->add_option("--learning-rate", "Adam learning rate");
    cmd->add_option("--gru-hidden", "GRU hidden size (0 = feature dim)");
    cmd->add_option("--slots-per-day", "slots per operating day");
}

std::size_t train_slot_count(const hf::ModelConfig& cfg, std::size_t slots) {
    return static_cast<std::size_t>(static_cast<double>(slots) * cfg.train_frac);
}

struct BuiltHierarchy {
    hf::HierarchyData data;
    std::vector<std::size_t> assignment;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
};

BuiltHierarchy build_from_series(const hf::SeriesTable& table, const hf::ModelConfig& cfg) {
    const std::size_t train_slots = train_slot_count(cfg, table.slots);
    std::vector<std::vector<double>> profiles;
    for (std::size_t v = 0; v < table.num_nodes(); ++v)
        profiles.push_back(hf::daily_profile(table, v, cfg.slots_per_day, train_slots));
    BuiltHierarchy out;
    out.edges = hf::build_bottom_graph(profiles, cfg.top_k);
    out.assignment = hf::kmeans(profiles, cfg.clusters, cfg.seed).assignment;
    out.data = hf::build_hierarchy(table, out.edges, out.assignment,
                                   hf::prediction_mode_from_string(cfg.prediction_layer));
    return out;
}

hf::WindowSet windows_for(const hf::ModelConfig& cfg, std::size_t slots) {
    const std::size_t train_end = train_slot_count(cfg, slots);
    const std::size_t val_end =
        static_cast<std::size_t>(static_cast<double>(slots) * (cfg.train_frac + cfg.val_frac));
    return hf::make_windows(slots, cfg.lookback, cfg.horizon, train_end, val_end);
}

nlohmann::ordered_json summary_to_json(const hf::EvalSummary& s) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json per_node = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.metrics.node_ids.size(); ++i)
        per_node.push_back({{"node", s.metrics.node_ids[i]},
                            {"mae", s.metrics.mae[i]},
                            {"rmse", s.metrics.rmse[i]}});
    j["per_node"] = std::move(per_node);
    j["mae"] = s.metrics.aggregate_mae;
    j["rmse"] = s.metrics.aggregate_rmse;
    nlohmann::ordered_json hier = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < s.relations.size(); ++r)
        hier.push_back({{"parent", s.relations[r].parent_id},
                        {"mean_abs_error", s.hier_abs_mean[r]}});
    j["hierarchical_error"] = std::move(hier);
    return j;
}

void append_summary_csv(std::ostringstream& metrics, std::ostringstream& hier,
                        const std::string& source, const hf::EvalSummary& s) {
    for (std::size_t i = 0; i < s.metrics.node_ids.size(); ++i)
        metrics << source << "," << s.metrics.node_ids[i] << "," << s.metrics.mae[i] << ","
                << s.metrics.rmse[i] << "\n";
    metrics << source << ",__all__," << s.metrics.aggregate_mae << ","
            << s.metrics.aggregate_rmse << "\n";
    for (std::size_t r = 0; r < s.relations.size(); ++r)
        hier << source << "," << s.relations[r].parent_id << "," << s.hier_abs_mean[r] << "\n";
}

// ---- subcommand bodies ---------------------------------------------------

void cmd_gen_synthetic(const hf::SyntheticOptions& opt, const std::string& out,
                       const std::string& truth) {
    const hf::SyntheticData data = hf::gen_synthetic(opt);
    hf::save_series_csv(data.table, out);
    if (!truth.empty()) {
        nlohmann::ordered_json j;
        for (std::size_t v = 0; v < data.table.num_nodes(); ++v)
            j[data.table.node_ids[v]] = data.archetype[v];
        hf::write_file_atomic(truth, j.dump(2) + "\n");
    }
    std::cout << "wrote " << data.table.num_nodes() << " nodes x " << data.table.slots
              << " slots to " << out << "\n";
}

void cmd_build_hierarchy(const std::string& data_file, const hf::ModelConfig& cfg,
                         const std::string& out_dir) {
    const hf::SeriesTable table = hf::load_series_csv(data_file);
    const BuiltHierarchy built = build_from_series(table, cfg);
    std::filesystem::create_directories(out_dir);
    hf::save_hierarchy_json(built.data.graph, built.assignment, out_dir + "/hierarchy.json");
    hf::save_hr_csv(hf::build_hr(built.data.graph), out_dir + "/hr.csv");
    std::cout << "hierarchy: " << built.data.graph.nodes[0].size() << " bottom, "
              << built.data.graph.nodes[1].size() << " clusters; "
              << built.edges.size() << " bottom edges; wrote " << out_dir << "\n";
}

void cmd_train(const std::string& data_file, const hf::ModelConfig& cfg,
               const std::string& mode, const std::string& hierarchy_file,
               const std::string& out_dir) {
    if (mode != "tp" && mode != "hp")
        throw hf::ConfigError("--mode must be tp (initial only) or hp (with coordination)");
    const hf::SeriesTable table = hf::load_series_csv(data_file);

    hf::HierarchyData hier;
    std::vector<std::size_t> assignment;
    if (!hierarchy_file.empty()) {
        hf::MultiLayerGraph g = hf::load_hierarchy_json(hierarchy_file);
        assignment = g.parent_of_bottom;
        hier = hf::attach_series(std::move(g), table);
    } else {
        BuiltHierarchy built = build_from_series(table, cfg);
        hier = std::move(built.data);
        assignment = std::move(built.assignment);
    }

    const hf::WindowSet ws = windows_for(cfg, table.slots);
    if (ws.train.empty()) throw hf::DataError("no training windows: series too short");
    const std::size_t train_slots = train_slot_count(cfg, table.slots);
    std::array<hf::NormStats, 3> norm;
    for (int m = 0; m < 3; ++m) norm[m] = hf::compute_norm_stats(hier.series[m], train_slots);

    hf::Model model(cfg, hier.graph, norm, mode == "hp", cfg.seed);
    hf::Trainer trainer(model, hier.series, ws);
    std::cout << "training phase 1: " << ws.train.size() << " windows, " << cfg.epochs
              << " epochs\n";
    const hf::TrainResult p1 = trainer.train_phase1();
    std::cout << "phase 1 best val loss " << p1.best_val_loss << " at epoch " << p1.best_epoch
              << "\n";

    hf::TrainResult p2;
    const bool hp = mode == "hp";
    if (hp) {
        const hf::HierarchyMatrix hr = hf::build_hr(hier.graph);
        hf::Trainer phase2(model, hier.series, ws);
        std::cout << "training phase 2 (coordination)\n";
        p2 = phase2.train_phase2(hr);
        std::cout << "phase 2 best val loss " << p2.best_val_loss << " at epoch "
                  << p2.best_epoch << "\n";
    }

    std::filesystem::create_directories(out_dir);
    hf::save_checkpoint(out_dir, model, assignment, mode, p1, hp ? &p2 : nullptr);
    hf::write_epoch_log_csv(out_dir + "/train_log.csv", p1, hp ? &p2 : nullptr);
    std::cout << "checkpoint written to " << out_dir << "\n";
}

void cmd_predict(const std::string& checkpoint, const std::string& data_file,
                 std::size_t t_origin, const std::string& out) {
    const hf::Checkpoint ck = hf::load_checkpoint(checkpoint);
    const hf::SeriesTable table = hf::load_series_csv(data_file);
    if (t_origin < ck.cfg.lookback)
        throw hf::ConfigError("--t-origin must be >= lookback (" +
                              std::to_string(ck.cfg.lookback) + ")");
    if (t_origin > table.slots)
        throw hf::ConfigError("--t-origin is past the end of the series");

    hf::HierarchyData hier = hf::attach_series(ck.graph, table);
    hf::Model model(ck.cfg, hier.graph, ck.norm, ck.store);
    const std::vector<std::size_t> origins{t_origin};
    const std::vector<double> initial = hf::predict_initial(model, hier.series, origins);
    std::vector<double> coordinated;
    const bool hp = model.has_coordination();
    if (hp) {
        const hf::HierarchyMatrix hr = hf::build_hr(hier.graph);
        coordinated = hf::predict_coordinated(model, initial, hr, 1);
    }

    const std::size_t T = ck.cfg.horizon;
    std::ostringstream csv;
    csv.precision(17);
    csv << "node_id,t_origin,step,initial" << (hp ? ",coordinated" : "") << "\n";
    for (std::size_t r = 0; r < hier.graph.prediction_count(); ++r)
        for (std::size_t t = 0; t < T; ++t) {
            csv << hier.graph.prediction_node_id(r) << "," << t_origin << "," << t << ","
                << initial[r * T + t];
            if (hp) csv << "," << coordinated[r * T + t];
            csv << "\n";
        }
    hf::write_file_atomic(out, csv.str());
    std::cout << "wrote predictions for origin " << t_origin << " to " << out << "\n";
}

void cmd_evaluate(const std::string& checkpoint, const std::string& data_file,
                  const std::string& out_dir, const std::vector<std::string>& baselines) {
    const hf::Checkpoint ck = hf::load_checkpoint(checkpoint);
    const hf::SeriesTable table = hf::load_series_csv(data_file);
    hf::HierarchyData hier = hf::attach_series(ck.graph, table);
    hf::Model model(ck.cfg, hier.graph, ck.norm, ck.store);
    const hf::WindowSet ws = windows_for(ck.cfg, table.slots);
    if (ws.test.empty()) throw hf::DataError("no test windows: series too short");

    const hf::HierarchyMatrix hr = hf::build_hr(hier.graph);
    const hf::ModelEval ev = hf::evaluate_model(model, hier.series, ws.test, &hr);

    nlohmann::ordered_json report;
    std::ostringstream metrics_csv, hier_csv;
    metrics_csv.precision(17);
    hier_csv.precision(17);
    metrics_csv << "source,node_id,mae,rmse\n";
    hier_csv << "source,parent,mean_abs_error\n";
    report["model"]["initial"] = summary_to_json(ev.initial);
    append_summary_csv(metrics_csv, hier_csv, "model_initial", ev.initial);
    if (ev.coordinated) {
        report["model"]["coordinated"] = summary_to_json(*ev.coordinated);
        append_summary_csv(metrics_csv, hier_csv, "model_coordinated", *ev.coordinated);
    }

    if (!baselines.empty()) {
        const std::size_t train_slots = train_slot_count(ck.cfg, table.slots);
        const std::size_t T = ck.cfg.horizon;
        const auto profiles = hf::layer_profiles(hier, ck.cfg.slots_per_day, train_slots);
        const hf::ProportionTable props = hf::compute_proportions(hier, train_slots);
        const auto ha = [&](std::size_t o) {
            return hf::ha_forecast(profiles, ck.cfg.slots_per_day, o, T);
        };
        for (const std::string& name : baselines) {
            std::function<std::vector<double>(std::size_t)> rows_for;
            hf::GruBaseline gru(ck.cfg.gru_hidden_or_default(), T, ck.cfg.seed);
            if (name == "ha") {
                rows_for = [&](std::size_t o) {
                    return hf::prediction_rows(ha(o), hier.graph);
                };
            } else if (name == "bu") {
                rows_for = [&](std::size_t o) {
                    return hf::prediction_rows(hf::bottom_up(ha(o), hier.graph), hier.graph);
                };
            } else if (name == "mo") {
                rows_for = [&](std::size_t o) {
                    return hf::prediction_rows(hf::middle_out(ha(o), hier.graph, props),
                                               hier.graph);
                };
            } else if (name == "td") {
                rows_for = [&](std::size_t o) {
                    return hf::prediction_rows(hf::top_down(ha(o), hier.graph, props),
                                               hier.graph);
                };
            } else if (name == "gru") {
                const auto series_rows = hf::prediction_series(hier);
                const hf::NormStats pnorm = hf::prediction_norm(hier, train_slots);
                std::cout << "training gru baseline (" << ck.cfg.epochs << " epochs)\n";
                gru.fit(series_rows, pnorm, ws, ck.cfg);
                rows_for = [&, series_rows, pnorm](std::size_t o) {
                    return gru.predict(series_rows, pnorm, o, ck.cfg.lookback);
                };
            } else {
                throw hf::ConfigError("unknown baseline: " + name +
                                      " (expected ha, gru, bu, mo or td)");
            }
            const hf::EvalSummary s =
                hf::evaluate_rows(rows_for, hier.graph, hier.series, ws.test, T);
            report["baselines"][name] = summary_to_json(s);
            append_summary_csv(metrics_csv, hier_csv, name, s);
        }
    }

    std::filesystem::create_directories(out_dir);
    hf::write_file_atomic(out_dir + "/metrics.json", report.dump(2) + "\n");
    hf::write_file_atomic(out_dir + "/metrics.csv", metrics_csv.str());
    hf::write_file_atomic(out_dir + "/hier_error.csv", hier_csv.str());
    std::cout << "model mae " << ev.initial.metrics.aggregate_mae << ", rmse "
              << ev.initial.metrics.aggregate_rmse << "; reports in " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierflow: hierarchical graph forecasting for station count series"};
    app.require_subcommand(1);

    // gen-synthetic
    hf::SyntheticOptions syn;
    std::string syn_out = "synthetic.csv", syn_truth;
    bool syn_seed_set = false;
    CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a synthetic dataset");
    gen->add_option("--out", syn_out, "output CSV path");
    gen->add_option("--truth", syn_truth, "optional ground-truth archetype JSON");
    gen->add_option("--nodes", syn.nodes, "number of stations");
    gen->add_option("--days", syn.days, "number of days");
    gen->add_option("--slots-per-day", syn.slots_per_day, "slots per operating day");
    gen->add_option("--archetypes", syn.archetypes, "number of daily-shape archetypes");
    gen->add_option("--noise", syn.noise, "noise sigma as fraction of peak");
    gen->add_option("--seed", syn.seed, "RNG seed")
        ->each([&syn_seed_set](const std::string&) { syn_seed_set = true; });

    // build-hierarchy
    CommonOpts bh_opts;
    std::string bh_data, bh_out = "hierarchy";
    CLI::App* bh = app.add_subcommand("build-hierarchy", "build the three-layer hierarchy");
    bh->add_option("--data", bh_data, "input series CSV")->required();
    bh->add_option("--out-dir", bh_out, "output directory");
    add_config_flags(bh, bh_opts);

    // train
    CommonOpts tr_opts;
    std::string tr_data, tr_mode = "tp", tr_hier, tr_out = "checkpoint";
    CLI::App* tr = app.add_subcommand("train", "train the forecaster");
    tr->add_option("--data", tr_data, "input series CSV")->required();
    tr->add_option("--mode", tr_mode, "tp (initial only) or hp (with coordination)");
    tr->add_option("--hierarchy", tr_hier, "prebuilt hierarchy.json (default: build)");
    tr->add_option("--out-dir", tr_out, "checkpoint directory");
    add_config_flags(tr, tr_opts);

    // predict
    std::string pr_ck, pr_data, pr_out = "predictions.csv";
    std::size_t pr_origin = 0;
    CLI::App* pr = app.add_subcommand("predict", "forecast from a checkpoint");
    pr->add_option("--checkpoint", pr_ck, "checkpoint directory")->required();
    pr->add_option("--data", pr_data, "input series CSV")->required();
    pr->add_option("--t-origin", pr_origin, "forecast origin slot")->required();
    pr->add_option("--out", pr_out, "output CSV path");

    // evaluate
    std::string ev_ck, ev_data, ev_out = "eval";
    std::string ev_baselines;
    CLI::App* ev = app.add_subcommand("evaluate", "evaluate on the test split");
    ev->add_option("--checkpoint", ev_ck, "checkpoint directory")->required();
    ev->add_option("--data", ev_data, "input series CSV")->required();
    ev->add_option("--out-dir", ev_out, "report directory");
    ev->add_option("--baselines", ev_baselines, "comma list of ha,gru,bu,mo,td");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            syn.seed = hf::resolve_seed(syn_seed_set, syn.seed);
            cmd_gen_synthetic(syn, syn_out, syn_truth);
        } else if (bh->parsed()) {
            cmd_build_hierarchy(bh_data, resolve_config(bh_opts, *bh), bh_out);
        } else if (tr->parsed()) {
            cmd_train(tr_data, resolve_config(tr_opts, *tr), tr_mode, tr_hier, tr_out);
        } else if (pr->parsed()) {
            cmd_predict(pr_ck, pr_data, pr_origin, pr_out);
        } else if (ev->parsed()) {
            std::vector<std::string> names;
            std::stringstream ss(ev_baselines);
            for (std::string item; std::getline(ss, item, ',');)
                if (!item.empty()) names.push_back(item);
            cmd_evaluate(ev_ck, ev_data, ev_out, names);
        }
    } catch (const hf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const hf::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
