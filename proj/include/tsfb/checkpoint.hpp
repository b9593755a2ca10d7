#pragma once

#include <string>

#include <json.hpp>

#include "tsfb/nn.hpp"

namespace tsfb {

// Serialized model: magic TSFC, format u16, JSON architecture descriptor,
// then named parameter blobs in descriptor order. The descriptor carries the
// model kind, architecture fields, training-regime tag and data-cutoff date.
struct Checkpoint {
    nlohmann::json descriptor;
    // parameters in descriptor["params"] order
    std::vector<std::pair<std::string, Tensor>> params;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    static Checkpoint from_store(const ParamStore& store, nlohmann::json descriptor);
    void restore_into(ParamStore& store) const;

    bool bitwise_equal(const Checkpoint& other) const;
};

}  // namespace tsfb
