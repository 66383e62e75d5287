#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hierflow/metrics.hpp"
#include "hierflow/model.hpp"
#include "hierflow/windows.hpp"

namespace hierflow {

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;
};

// Two-phase optimization driver. Phase 1 fits the base forecaster (everything
// except `coord.*`); phase 2 freezes it and fits the coordination map on the
// base model's raw predictions. Each epoch's shuffle is a pure function of
// (seed, phase, epoch), so resuming from a snapshot reproduces the remaining
// trajectory bitwise.
class Trainer {
public:
    Trainer(Model& model, const std::array<SeriesTable, 3>& series, const WindowSet& ws);

    TrainResult train_phase1();
    TrainResult train_phase2(const HierarchyMatrix& hr);

    // Mean batch loss over a split with the current parameters, no gradients.
    double phase1_loss(const std::vector<std::size_t>& origins);

    // Optimizer + progress snapshot for the phase currently in flight.
    nlohmann::json state_json() const;
    void restore_state(const nlohmann::json& j);

private:
    TrainResult run_phase(bool phase2, const HierarchyMatrix* hr);
    const BatchedGraph& batched(std::size_t B);
    Tensor initial_raw_batch(const std::vector<std::size_t>& origins, std::size_t first,
                             std::size_t B);
    double phase2_loss(const std::vector<std::size_t>& origins, const HierarchyMatrix& hr,
                       const std::map<std::size_t, std::vector<double>>& cache);

    Model& model_;
    const std::array<SeriesTable, 3>& series_;
    const WindowSet& ws_;
    std::map<std::size_t, BatchedGraph> batched_cache_;
    AdamOptimizer adam_;
    std::size_t next_epoch_ = 0;
};

// Test-set evaluation of a row-producer: `rows_for(origin)` returns a raw
// [V_Pr x T] forecast. Shared by the model and every baseline.
struct EvalSummary {
    MetricsReport metrics;
    std::vector<HierRelation> relations;
    std::vector<double> hier_abs_mean;  // per relation, mean |sum(children)-parent|
};

EvalSummary evaluate_rows(const std::function<std::vector<double>(std::size_t)>& rows_for,
                          const MultiLayerGraph& graph, const std::array<SeriesTable, 3>& series,
                          const std::vector<std::size_t>& origins, std::size_t horizon);

// Batched model evaluation; returns the initial summary and, when `hr` is
// given and the model has a coordination map, the coordinated one.
struct ModelEval {
    EvalSummary initial;
    std::optional<EvalSummary> coordinated;
};

ModelEval evaluate_model(Model& model, const std::array<SeriesTable, 3>& series,
                         const std::vector<std::size_t>& origins, const HierarchyMatrix* hr);

// Raw-scale predictions for a batch of origins: initial and (optionally)
// coordinated, each [B*V_Pr x T].
std::vector<double> predict_initial(Model& model, const std::array<SeriesTable, 3>& series,
                                    const std::vector<std::size_t>& origins);
std::vector<double> predict_coordinated(Model& model, const std::vector<double>& initial_raw,
                                        const HierarchyMatrix& hr, std::size_t B);

// ---- checkpoint directory ------------------------------------------------

void save_checkpoint(const std::string& dir, const Model& model,
                     const std::vector<std::size_t>& assignment, const std::string& mode,
                     const TrainResult& phase1, const TrainResult* phase2);

struct Checkpoint {
    ModelConfig cfg;
    MultiLayerGraph graph;
    std::array<NormStats, 3> norm;
    ParameterStore store;
    std::string mode;  // "tp" | "hp"
};

Checkpoint load_checkpoint(const std::string& dir);

void write_epoch_log_csv(const std::string& path, const TrainResult& phase1,
                         const TrainResult* phase2);

}  // namespace hierflow
