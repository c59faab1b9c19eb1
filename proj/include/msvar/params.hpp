#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "msvar/tensor.hpp"

namespace msvar {

// Ordered collection of named parameter tensors. Order is the serialization
// and optimizer-update order, so it must be construction-deterministic.
struct ParamStore {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    std::unordered_map<std::string, size_t> index;

    Tensor& add(const std::string& name, std::vector<int64_t> shape) {
        check_config(index.find(name) == index.end(), "ParamStore: duplicate name " + name);
        index[name] = names.size();
        names.push_back(name);
        tensors.emplace_back(std::move(shape));
        return tensors.back();
    }

    bool has(const std::string& name) const { return index.find(name) != index.end(); }

    Tensor& get(const std::string& name) {
        auto it = index.find(name);
        check_config(it != index.end(), "ParamStore: unknown name " + name);
        return tensors[it->second];
    }

    const Tensor& get(const std::string& name) const {
        auto it = index.find(name);
        check_config(it != index.end(), "ParamStore: unknown name " + name);
        return tensors[it->second];
    }

    size_t size() const { return names.size(); }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.numel();
        return n;
    }

    // Shape-checked bulk assignment, used when loading checkpoints.
    void load_from(const std::vector<std::pair<std::string, Tensor>>& entries) {
        for (const auto& [name, t] : entries) {
            if (!has(name)) continue;  // optimizer slots are stored alongside model tensors
            Tensor& dst = get(name);
            check_shape(dst.same_shape(t), "ParamStore: shape mismatch loading " + name + ": expected " +
                                               shape_str(dst.shape) + " got " + shape_str(t.shape));
            dst = t;
        }
    }
};

}  // namespace msvar
