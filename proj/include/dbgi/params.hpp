#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dbgi/rng.hpp"
#include "dbgi/tensor.hpp"

namespace dbgi {

// A named model tensor. Trainable entries carry gradients; buffers (batch-norm
// running stats) are checkpointed but never updated by the optimizer.
// `decay` marks tensors included in the L2 penalty.
struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
    bool decay = false;
};

enum class Init { zeros, ones, glorot_uniform };

// Registry of all model state, in deterministic construction order. Names are
// unique; registration order defines checkpoint order and optimizer slots.
// Each parameter's init stream derives from (seed, name), so two models built
// from the same seed start identical wherever their parameter sets overlap.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

    Tensor add(const std::string& name, Shape shape, Init init, bool decay);
    Tensor add_buffer(const std::string& name, Shape shape, double fill);

    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    Tensor find(const std::string& name) const;

    const std::vector<Parameter>& entries() const { return params_; }
    std::vector<Parameter>& entries() { return params_; }
    std::size_t trainable_count() const;

    void zero_grad();

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
    std::uint64_t seed_ = 0;
};

// Flat binary checkpoint. Layout: magic "DBGI", version u32, tensor count u32;
// per tensor: name length u16, UTF-8 name, rank u8, extents u64 LE, payload
// f32 LE (internal f64 values narrowed on save, widened on load).
void save_checkpoint(const ParameterStore& store, const std::string& path);
void load_checkpoint(ParameterStore& store, const std::string& path, bool allow_missing = false);

}  // namespace dbgi
