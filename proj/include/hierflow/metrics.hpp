#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hierflow/hierarchy.hpp"

namespace hierflow {

// Raw-scale accuracy per prediction-layer node, averaged over nodes.
struct MetricsReport {
    std::vector<std::string> node_ids;
    std::vector<double> mae;
    std::vector<double> rmse;
    double aggregate_mae = 0.0;
    double aggregate_rmse = 0.0;
};

class MetricsAccumulator {
public:
    MetricsAccumulator(std::size_t num_nodes, std::size_t horizon);

    // pred/target are [B*V_Pr x T] row-major on the raw scale.
    void add(const std::vector<double>& pred, const std::vector<double>& target,
             std::size_t B);

    MetricsReport report(const std::vector<std::string>& node_ids) const;

private:
    std::size_t nodes_, horizon_;
    std::vector<double> abs_sum_, sq_sum_;
    std::size_t count_ = 0;  // (sample, step) pairs per node
};

// Parent/children row groups within the prediction layer. Middle parents use
// their bottom children directly; a top parent uses middle children when they
// are predicted, bottom descendants otherwise.
struct HierRelation {
    std::string parent_id;
    std::size_t parent_row;
    std::vector<std::size_t> child_rows;
};

std::vector<HierRelation> hierarchy_relations(const MultiLayerGraph& graph);

// Signed error per relation and horizon step: sum(children) - parent.
// pred is [V_Pr x T] for a single sample.
std::vector<double> hierarchical_error(const std::vector<double>& pred, std::size_t horizon,
                                       const std::vector<HierRelation>& relations);

}  // namespace hierflow
