#include "hierflow/metrics.hpp"

#include <cmath>

#include "hierflow/errors.hpp"

namespace hierflow {

MetricsAccumulator::MetricsAccumulator(std::size_t num_nodes, std::size_t horizon)
    : nodes_(num_nodes),
      horizon_(horizon),
      abs_sum_(num_nodes, 0.0),
      sq_sum_(num_nodes, 0.0) {}

void MetricsAccumulator::add(const std::vector<double>& pred,
                             const std::vector<double>& target, std::size_t B) {
    if (pred.size() != B * nodes_ * horizon_ || target.size() != pred.size())
        throw ContractError("metrics accumulator size mismatch");
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < nodes_; ++v)
            for (std::size_t t = 0; t < horizon_; ++t) {
                const double e = pred[(b * nodes_ + v) * horizon_ + t] -
                                 target[(b * nodes_ + v) * horizon_ + t];
                abs_sum_[v] += std::abs(e);
                sq_sum_[v] += e * e;
            }
    count_ += B * horizon_;
}

MetricsReport MetricsAccumulator::report(const std::vector<std::string>& node_ids) const {
    MetricsReport r;
    r.node_ids = node_ids;
    const double n = count_ ? static_cast<double>(count_) : 1.0;
    for (std::size_t v = 0; v < nodes_; ++v) {
        r.mae.push_back(abs_sum_[v] / n);
        r.rmse.push_back(std::sqrt(sq_sum_[v] / n));
        r.aggregate_mae += r.mae.back();
        r.aggregate_rmse += r.rmse.back();
    }
    if (nodes_) {
        r.aggregate_mae /= static_cast<double>(nodes_);
        r.aggregate_rmse /= static_cast<double>(nodes_);
    }
    return r;
}

std::vector<HierRelation> hierarchy_relations(const MultiLayerGraph& graph) {
    // Map (layer, node) -> prediction row.
    const std::size_t VPr = graph.prediction_count();
    std::array<std::vector<long long>, 3> row_of;
    for (int m = 0; m < 3; ++m) row_of[m].assign(graph.nodes[m].size(), -1);
    for (std::size_t r = 0; r < VPr; ++r) {
        const auto& [m, v] = graph.prediction_nodes[r];
        row_of[m][v] = static_cast<long long>(r);
    }
    std::vector<HierRelation> rels;
    const auto mid_children = graph.children_of_middle();
    const auto top_children = graph.children_of_top();
    for (std::size_t c = 0; c < graph.nodes[1].size(); ++c) {
        if (row_of[1][c] < 0) continue;
        HierRelation rel;
        rel.parent_id = graph.nodes[1][c];
        rel.parent_row = static_cast<std::size_t>(row_of[1][c]);
        for (std::size_t v : mid_children[c])
            rel.child_rows.push_back(static_cast<std::size_t>(row_of[0][v]));
        rels.push_back(std::move(rel));
    }
    for (std::size_t t = 0; t < graph.nodes[2].size(); ++t) {
        if (row_of[2][t] < 0) continue;
        HierRelation rel;
        rel.parent_id = graph.nodes[2][t];
        rel.parent_row = static_cast<std::size_t>(row_of[2][t]);
        bool mids_predicted = true;
        for (std::size_t c : top_children[t]) mids_predicted = mids_predicted && row_of[1][c] >= 0;
        if (mids_predicted) {
            for (std::size_t c : top_children[t])
                rel.child_rows.push_back(static_cast<std::size_t>(row_of[1][c]));
        } else {
            for (std::size_t c : top_children[t])
                for (std::size_t v : graph.children_of_middle()[c])
                    rel.child_rows.push_back(static_cast<std::size_t>(row_of[0][v]));
        }
        rels.push_back(std::move(rel));
    }
    return rels;
}

std::vector<double> hierarchical_error(const std::vector<double>& pred, std::size_t horizon,
                                       const std::vector<HierRelation>& relations) {
    std::vector<double> out;
    out.reserve(relations.size() * horizon);
    for (const auto& rel : relations)
        for (std::size_t t = 0; t < horizon; ++t) {
            double s = 0.0;
            for (std::size_t c : rel.child_rows) s += pred[c * horizon + t];
            out.push_back(s - pred[rel.parent_row * horizon + t]);
        }
    return out;
}

}  // namespace hierflow
