#include "hierflow/param_store.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hierflow/errors.hpp"
#include "hierflow/io_util.hpp"

namespace hierflow {

Tensor ParameterStore::create(const std::string& path, Shape shape, std::size_t fan_in,
                              Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return create_with(path, std::move(shape), std::move(v));
}

Tensor ParameterStore::create_zeros(const std::string& path, Shape shape) {
    return create_with(path, std::move(shape), std::vector<double>(shape_numel(shape), 0.0));
}

Tensor ParameterStore::create_with(const std::string& path, Shape shape,
                                   std::vector<double> value) {
    if (params_.count(path))
        throw ContractError("duplicate parameter path: " + path);
    Tensor t = Tensor::parameter(std::move(shape), std::move(value));
    params_.emplace(path, t);
    return t;
}

Tensor ParameterStore::get(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw ContractError("unknown parameter path: " + path);
    return it->second;
}

void ParameterStore::zero_grads() {
    for (auto& [path, t] : params_) t.zero_grad();
}

std::vector<std::string> ParameterStore::paths_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [path, t] : params_)
        if (path.rfind(prefix, 0) == 0) out.push_back(path);
    return out;
}

std::size_t ParameterStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [path, t] : params_) n += t.numel();
    return n;
}

nlohmann::json ParameterStore::to_json() const {
    nlohmann::ordered_json j;
    for (const auto& [path, t] : params_) {
        j[path] = {{"shape", t.shape()}, {"data", t.value()}};
    }
    return j;
}

ParameterStore ParameterStore::from_json(const nlohmann::json& j) {
    ParameterStore s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        Shape shape = it.value().at("shape").get<Shape>();
        std::vector<double> data = it.value().at("data").get<std::vector<double>>();
        s.create_with(it.key(), std::move(shape), std::move(data));
    }
    return s;
}

void ParameterStore::save(const std::string& file) const {
    write_file_atomic(file, to_json().dump(1));
}

ParameterStore ParameterStore::load(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open checkpoint file: " + file);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

std::uint64_t ParameterStore::value_hash(const std::string& prefix) const {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&h](const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [path, t] : params_) {
        if (!prefix.empty() && path.rfind(prefix, 0) != 0) continue;
        feed(path.data(), path.size());
        feed(t.value().data(), t.value().size() * sizeof(double));
    }
    return h;
}

// ---- Adam ----------------------------------------------------------------

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParameterStore& store, double lr,
                         const std::vector<std::string>& paths) {
    std::vector<std::string> order = paths;
    if (order.empty())
        for (const auto& [path, t] : store.all()) order.push_back(path);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& path : order) {
        Tensor p = store.get(path);
        if (!p.has_grad())
            throw ContractError("optimizer step with missing gradient for parameter " + path);
        auto& [m, v] = moments_[path];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        auto& val = p.value_mut();
        const auto& g = p.grad();
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
        p.zero_grad();
    }
}

double AdamOptimizer::clip_global_norm(ParameterStore& store, double max_norm,
                                       const std::vector<std::string>& paths) {
    double sq = 0.0;
    for (const auto& path : paths) {
        Tensor p = store.get(path);
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (const auto& path : paths) {
            Tensor p = store.get(path);
            if (!p.has_grad()) continue;
            for (double& g : p.data()->grad) g *= scale;
        }
    }
    return norm;
}

nlohmann::json AdamOptimizer::state_to_json() const {
    nlohmann::ordered_json j;
    j["t"] = t_;
    nlohmann::ordered_json m;
    for (const auto& [path, mv] : moments_) {
        m[path] = {{"m", mv.first}, {"v", mv.second}};
    }
    j["moments"] = m;
    return j;
}

void AdamOptimizer::state_from_json(const nlohmann::json& j) {
    t_ = j.at("t").get<long long>();
    moments_.clear();
    const auto& m = j.at("moments");
    for (auto it = m.begin(); it != m.end(); ++it) {
        moments_[it.key()] = {it.value().at("m").get<std::vector<double>>(),
                              it.value().at("v").get<std::vector<double>>()};
    }
}

}  // namespace hierflow
