#pragma once

#include "dumlab/errors.hpp"
#include "dumlab/tensor.hpp"

#include "json.hpp"

namespace dumlab {

// Tensors are checkpointed as {shape, data}. nlohmann emits shortest
// round-tripping decimal for doubles, so load is bit-faithful.
inline nlohmann::json tensor_to_json(const Tensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape();
    j["data"] = t.data();
    return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j, bool requires_grad) {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    if (data.size() != shape_numel(shape))
        throw FormatError("tensor payload size does not match its shape");
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

}  // namespace dumlab
