#include "hierflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hierflow/errors.hpp"
#include "hierflow/io_util.hpp"
#include "hierflow/rng.hpp"

namespace hierflow {

namespace {

constexpr std::uint64_t kEpochMix = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kPhase2Mix = 0x517cc1b727220a95ull;

std::vector<std::size_t> slice(const std::vector<std::size_t>& v, std::size_t first,
                               std::size_t count) {
    return {v.begin() + static_cast<std::ptrdiff_t>(first),
            v.begin() + static_cast<std::ptrdiff_t>(first + count)};
}

std::uint64_t base_value_hash(const ParameterStore& store) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [path, t] : store.all()) {
        if (path.rfind("coord.", 0) == 0) continue;
        h ^= store.value_hash(path);
        h *= 1099511628211ull;
    }
    return h;
}

double param_l2(const ParameterStore& store) {
    double s = 0.0;
    for (const auto& [path, t] : store.all())
        for (double v : t.value()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

Trainer::Trainer(Model& model, const std::array<SeriesTable, 3>& series, const WindowSet& ws)
    : model_(model), series_(series), ws_(ws) {}

const BatchedGraph& Trainer::batched(std::size_t B) {
    auto it = batched_cache_.find(B);
    if (it == batched_cache_.end())
        it = batched_cache_.emplace(B, make_batched_graph(model_.graph(), B)).first;
    return it->second;
}

TrainResult Trainer::train_phase1() { return run_phase(false, nullptr); }

TrainResult Trainer::train_phase2(const HierarchyMatrix& hr) { return run_phase(true, &hr); }

double Trainer::phase1_loss(const std::vector<std::size_t>& origins) {
    const auto& cfg = model_.config();
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < origins.size(); i += cfg.batch_size) {
        const std::size_t B = std::min(cfg.batch_size, origins.size() - i);
        SampleBatch batch = model_.make_batch(series_, slice(origins, i, B));
        Tensor pred = model_.forward_initial(batched(B), batch);
        total += sql_loss(pred, batch.targets_norm, cfg.sql_z).item();
        ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
}

Tensor Trainer::initial_raw_batch(const std::vector<std::size_t>& origins, std::size_t first,
                                  std::size_t B) {
    SampleBatch batch = model_.make_batch(series_, slice(origins, first, B));
    Tensor pred = model_.forward_initial(batched(B), batch);
    return model_.denormalize(pred, B);
}

double Trainer::phase2_loss(const std::vector<std::size_t>& origins, const HierarchyMatrix& hr,
                            const std::map<std::size_t, std::vector<double>>& cache) {
    const auto& cfg = model_.config();
    const std::size_t VPr = model_.graph().prediction_count();
    const std::size_t T = cfg.horizon;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < origins.size(); i += cfg.batch_size) {
        const std::size_t B = std::min(cfg.batch_size, origins.size() - i);
        std::vector<double> init(B * VPr * T);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& rows = cache.at(origins[i + b]);
            std::copy(rows.begin(), rows.end(), init.begin() + b * VPr * T);
        }
        SampleBatch batch = model_.make_batch(series_, slice(origins, i, B));
        Tensor coord =
            model_.coordinate(Tensor::constant({B * VPr, T}, std::move(init)), hr, B);
        total += sql_loss(model_.normalize_rows(coord, B), batch.targets_norm, cfg.sql_z).item();
        ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
}

TrainResult Trainer::run_phase(bool phase2, const HierarchyMatrix* hr) {
    const auto& cfg = model_.config();
    ParameterStore& store = model_.store();
    if (phase2 && !model_.has_coordination())
        throw ContractError("phase 2 requested on a model without a coordination map");

    std::vector<std::string> paths;
    for (const auto& [p, t] : store.all()) {
        const bool coord = p.rfind("coord.", 0) == 0;
        if (coord == phase2) paths.push_back(p);
    }
    if (paths.empty()) throw ContractError("no trainable parameters for this phase");

    // Phase 2 trains on the frozen base model's predictions, so compute them
    // once up front with no tape.
    std::map<std::size_t, std::vector<double>> cache;
    std::uint64_t frozen_hash = 0;
    const std::size_t VPr = model_.graph().prediction_count();
    const std::size_t T = cfg.horizon;
    if (phase2) {
        frozen_hash = base_value_hash(store);
        for (const auto* split : {&ws_.train, &ws_.val})
            for (std::size_t i = 0; i < split->size(); i += cfg.batch_size) {
                const std::size_t B = std::min(cfg.batch_size, split->size() - i);
                Tensor raw = initial_raw_batch(*split, i, B);
                for (std::size_t b = 0; b < B; ++b)
                    cache[(*split)[i + b]] =
                        std::vector<double>(raw.value().begin() + b * VPr * T,
                                            raw.value().begin() + (b + 1) * VPr * T);
            }
    }

    TrainResult res;
    res.best_val_loss = std::numeric_limits<double>::infinity();
    std::map<std::string, std::vector<double>> best;

    for (std::size_t epoch = next_epoch_; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> origins = ws_.train;
        Rng shuffle_rng(cfg.seed + (phase2 ? kPhase2Mix : 0) + kEpochMix * (epoch + 1));
        shuffle_rng.shuffle(origins);

        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t i = 0; i < origins.size(); i += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, origins.size() - i);
            Tape tape;
            Tensor loss;
            SampleBatch batch = model_.make_batch(series_, slice(origins, i, B));
            if (!phase2) {
                Tensor pred = model_.forward_initial(batched(B), batch);
                loss = sql_loss(pred, batch.targets_norm, cfg.sql_z);
            } else {
                std::vector<double> init(B * VPr * T);
                for (std::size_t b = 0; b < B; ++b) {
                    const auto& rows = cache.at(origins[i + b]);
                    std::copy(rows.begin(), rows.end(), init.begin() + b * VPr * T);
                }
                Tensor coord =
                    model_.coordinate(Tensor::constant({B * VPr, T}, std::move(init)), *hr, B);
                loss = sql_loss(model_.normalize_rows(coord, B), batch.targets_norm, cfg.sql_z);
            }
            const double lv = loss.item();
            if (!std::isfinite(lv)) {
                std::ostringstream msg;
                msg << "non-finite loss in phase " << (phase2 ? 2 : 1) << " at epoch " << epoch
                    << ", batch " << batches << " (parameter L2 norm " << param_l2(store)
                    << ")";
                throw NumericError(msg.str());
            }
            total += lv;
            ++batches;
            tape.backward(loss);
            AdamOptimizer::clip_global_norm(store, cfg.clip_norm, paths);
            adam_.step(store, cfg.learning_rate, paths);
        }
        const double train_loss = batches ? total / static_cast<double>(batches) : 0.0;
        double val_loss = train_loss;
        if (!ws_.val.empty())
            val_loss = phase2 ? phase2_loss(ws_.val, *hr, cache) : phase1_loss(ws_.val);
        res.log.push_back({epoch, train_loss, val_loss});
        if (val_loss < res.best_val_loss) {
            res.best_val_loss = val_loss;
            res.best_epoch = epoch;
            best.clear();
            for (const auto& p : paths) best[p] = store.get(p).value();
        }
        next_epoch_ = epoch + 1;
    }

    for (const auto& [p, v] : best) {
        Tensor t = store.get(p);
        t.value_mut() = v;
        t.zero_grad();
    }
    if (phase2 && base_value_hash(store) != frozen_hash)
        throw ContractError("phase 2 modified frozen base parameters");
    return res;
}

nlohmann::json Trainer::state_json() const {
    nlohmann::ordered_json j;
    j["next_epoch"] = next_epoch_;
    j["adam"] = adam_.state_to_json();
    j["params"] = model_.store().to_json();
    return j;
}

void Trainer::restore_state(const nlohmann::json& j) {
    next_epoch_ = j.at("next_epoch").get<std::size_t>();
    adam_.state_from_json(j.at("adam"));
    ParameterStore& store = model_.store();
    const auto& params = j.at("params");
    for (const auto& [path, entry] : params.items()) {
        if (!store.contains(path))
            throw ContractError("snapshot parameter not in model: " + path);
        Tensor t = store.get(path);
        auto vals = entry.at("data").get<std::vector<double>>();
        if (vals.size() != t.numel())
            throw ContractError("snapshot size mismatch for " + path);
        t.value_mut() = std::move(vals);
        t.zero_grad();
    }
}

// ---- evaluation ----------------------------------------------------------

EvalSummary evaluate_rows(const std::function<std::vector<double>(std::size_t)>& rows_for,
                          const MultiLayerGraph& graph,
                          const std::array<SeriesTable, 3>& series,
                          const std::vector<std::size_t>& origins, std::size_t horizon) {
    const std::size_t VPr = graph.prediction_count();
    EvalSummary out;
    out.relations = hierarchy_relations(graph);
    out.hier_abs_mean.assign(out.relations.size(), 0.0);
    MetricsAccumulator acc(VPr, horizon);
    std::vector<double> target(VPr * horizon);
    for (std::size_t origin : origins) {
        const std::vector<double> pred = rows_for(origin);
        for (std::size_t r = 0; r < VPr; ++r) {
            const auto& [m, v] = graph.prediction_nodes[r];
            for (std::size_t t = 0; t < horizon; ++t)
                target[r * horizon + t] = series[m].at(v, origin + t);
        }
        acc.add(pred, target, 1);
        const auto err = hierarchical_error(pred, horizon, out.relations);
        for (std::size_t r = 0; r < out.relations.size(); ++r)
            for (std::size_t t = 0; t < horizon; ++t)
                out.hier_abs_mean[r] += std::abs(err[r * horizon + t]);
    }
    const double n = origins.empty() ? 1.0 : static_cast<double>(origins.size() * horizon);
    for (double& v : out.hier_abs_mean) v /= n;
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < VPr; ++r) ids.push_back(graph.prediction_node_id(r));
    out.metrics = acc.report(ids);
    return out;
}

std::vector<double> predict_initial(Model& model, const std::array<SeriesTable, 3>& series,
                                    const std::vector<std::size_t>& origins) {
    const std::size_t B = origins.size();
    SampleBatch batch = model.make_batch(series, origins);
    const BatchedGraph bg = make_batched_graph(model.graph(), B);
    Tensor pred = model.forward_initial(bg, batch);
    return model.denormalize(pred, B).value();
}

std::vector<double> predict_coordinated(Model& model, const std::vector<double>& initial_raw,
                                        const HierarchyMatrix& hr, std::size_t B) {
    const std::size_t VPr = model.graph().prediction_count();
    const std::size_t T = model.config().horizon;
    Tensor init = Tensor::constant({B * VPr, T}, initial_raw);
    return model.coordinate(init, hr, B).value();
}

ModelEval evaluate_model(Model& model, const std::array<SeriesTable, 3>& series,
                         const std::vector<std::size_t>& origins, const HierarchyMatrix* hr) {
    const std::size_t VPr = model.graph().prediction_count();
    const std::size_t T = model.config().horizon;
    const std::size_t batch = model.config().batch_size;

    // Cache per-origin rows so both summaries reuse one forward sweep.
    std::map<std::size_t, std::vector<double>> init_rows, coord_rows;
    const bool do_coord = hr != nullptr && model.has_coordination();
    for (std::size_t i = 0; i < origins.size(); i += batch) {
        const std::size_t B = std::min(batch, origins.size() - i);
        const std::vector<std::size_t> part(origins.begin() + i, origins.begin() + i + B);
        const std::vector<double> raw = predict_initial(model, series, part);
        std::vector<double> coord;
        if (do_coord) coord = predict_coordinated(model, raw, *hr, B);
        for (std::size_t b = 0; b < B; ++b) {
            init_rows[part[b]] = std::vector<double>(raw.begin() + b * VPr * T,
                                                     raw.begin() + (b + 1) * VPr * T);
            if (do_coord)
                coord_rows[part[b]] = std::vector<double>(coord.begin() + b * VPr * T,
                                                          coord.begin() + (b + 1) * VPr * T);
        }
    }

    ModelEval out;
    out.initial = evaluate_rows([&](std::size_t o) { return init_rows.at(o); }, model.graph(),
                                series, origins, T);
    if (do_coord)
        out.coordinated = evaluate_rows([&](std::size_t o) { return coord_rows.at(o); },
                                        model.graph(), series, origins, T);
    return out;
}

// ---- checkpoints ---------------------------------------------------------

namespace {

std::string iso_now() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

nlohmann::ordered_json norm_to_json(const std::array<NormStats, 3>& norm) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& n : norm) {
        nlohmann::ordered_json l;
        l["mean"] = n.mean;
        l["stddev"] = n.stddev;
        layers.push_back(std::move(l));
    }
    nlohmann::ordered_json j;
    j["layers"] = std::move(layers);
    return j;
}

std::array<NormStats, 3> norm_from_json(const nlohmann::json& j) {
    std::array<NormStats, 3> norm;
    const auto& layers = j.at("layers");
    for (int m = 0; m < 3; ++m) {
        norm[m].mean = layers.at(m).at("mean").get<std::vector<double>>();
        norm[m].stddev = layers.at(m).at("stddev").get<std::vector<double>>();
    }
    return norm;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model,
                     const std::vector<std::size_t>& assignment, const std::string& mode,
                     const TrainResult& phase1, const TrainResult* phase2) {
    write_file_atomic(dir + "/config.json", model.config().to_json().dump(2) + "\n");
    model.store().save(dir + "/params.json");
    save_hierarchy_json(model.graph(), assignment, dir + "/hierarchy.json");
    write_file_atomic(dir + "/norm.json", norm_to_json(model.norm()).dump(2) + "\n");

    char hash_hex[20];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(model.config().config_hash()));
    nlohmann::ordered_json m;
    m["mode"] = mode;
    m["config_hash"] = hash_hex;
    m["param_count"] = model.store().total_elements();
    m["phase1"] = {{"best_epoch", phase1.best_epoch}, {"val_loss", phase1.best_val_loss}};
    if (phase2)
        m["phase2"] = {{"best_epoch", phase2->best_epoch}, {"val_loss", phase2->best_val_loss}};
    m["created"] = iso_now();
    write_file_atomic(dir + "/manifest.json", m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
    Checkpoint ck;
    ck.cfg = ModelConfig::load(dir + "/config.json");
    ck.graph = load_hierarchy_json(dir + "/hierarchy.json");
    nlohmann::json nj;
    try {
        nj = nlohmann::json::parse(read_file(dir + "/norm.json"));
        ck.norm = norm_from_json(nj);
        ck.store = ParameterStore::load(dir + "/params.json");
        const auto manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
        ck.mode = manifest.at("mode").get<std::string>();
    } catch (const ConfigError&) {
        throw;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError("malformed checkpoint in " + dir + ": " + e.what());
    }
    return ck;
}

void write_epoch_log_csv(const std::string& path, const TrainResult& phase1,
                         const TrainResult* phase2) {
    std::ostringstream out;
    out << "phase,epoch,train_loss,val_loss\n";
    out.precision(17);
    for (const auto& e : phase1.log)
        out << "1," << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
    if (phase2)
        for (const auto& e : phase2->log)
            out << "2," << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
    write_file_atomic(path, out.str());
}

}  // namespace hierflow
