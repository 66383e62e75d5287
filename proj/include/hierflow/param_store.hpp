#pragma once

#include <map>
#include <string>
#include <vector>

#include "hierflow/rng.hpp"
#include "hierflow/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace hierflow {

// Named map of learnable tensors. std::map keeps iteration in parameter-path
// order, which makes optimizer updates deterministic regardless of
// registration order.
class ParameterStore {
public:
    // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Tensor create(const std::string& path, Shape shape, std::size_t fan_in, Rng& rng);
    Tensor create_zeros(const std::string& path, Shape shape);
    Tensor create_with(const std::string& path, Shape shape, std::vector<double> value);

    Tensor get(const std::string& path) const;
    bool contains(const std::string& path) const { return params_.count(path) != 0; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    void zero_grads();

    // Paths with the given prefix, in path order.
    std::vector<std::string> paths_with_prefix(const std::string& prefix) const;

    std::size_t total_elements() const;

    // Checkpoint format: {path: {"shape": [...], "data": [...]}}.
    void save(const std::string& file) const;
    static ParameterStore load(const std::string& file);

    nlohmann::json to_json() const;
    static ParameterStore from_json(const nlohmann::json& j);

    // FNV-1a over the serialized values; used for frozen-phase assertions.
    std::uint64_t value_hash(const std::string& prefix = "") const;

private:
    std::map<std::string, Tensor> params_;
};

// Adam with bias correction. Step order follows parameter-path order.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // Updates the named parameters (all when `paths` is empty) and zeroes
    // their gradients. A listed parameter without a gradient buffer is a
    // contract violation.
    void step(ParameterStore& store, double lr, const std::vector<std::string>& paths = {});

    // Scales gradients of `paths` so their global L2 norm is at most
    // `max_norm`; returns the pre-clip norm.
    static double clip_global_norm(ParameterStore& store, double max_norm,
                                   const std::vector<std::string>& paths);

    nlohmann::json state_to_json() const;
    void state_from_json(const nlohmann::json& j);

private:
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace hierflow
