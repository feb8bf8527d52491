#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "caformer/nd_array.hpp"
#include "caformer/rng.hpp"
#include "caformer/tape.hpp"

namespace caformer {

// Named trainable tensors, insertion-ordered so optimizer sweeps and
// checkpoints are deterministic.
class ParamStore {
public:
    NdArray& add(const std::string& name, NdArray value);
    bool contains(const std::string& name) const;
    NdArray& at(const std::string& name);
    const NdArray& at(const std::string& name) const;

    std::vector<std::pair<std::string, NdArray>>& items() { return items_; }
    const std::vector<std::pair<std::string, NdArray>>& items() const { return items_; }
    std::size_t count() const { return items_.size(); }
    std::size_t total_size() const;

    // Register every parameter as a differentiable leaf on a tape.
    std::map<std::string, tape::Var> leaves(tape::Tape& t) const;

private:
    std::vector<std::pair<std::string, NdArray>> items_;
    std::map<std::string, std::size_t> index_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight; the usual linear-layer
// fan-in scaling, drawn deterministically from the given stream.
NdArray init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out);
NdArray init_vector(Rng& rng, std::size_t fan_in, std::size_t n);

// Binary checkpoint: magic, embedded config JSON, then named f64 payloads.
// Little-endian throughout.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& config_json);

struct Checkpoint {
    ParamStore params;
    std::string config_json;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace caformer
