#ifndef STAGENET_CHECKPOINT_HPP
#define STAGENET_CHECKPOINT_HPP

#include <string>
#include <vector>

#include "stagenet/network.hpp"

namespace stagenet::ckpt {

// One named float32 tensor in the checkpoint table.
struct NamedArray {
  std::string name;
  std::vector<long> dims;
  std::vector<float> values;
};

// Versioned binary table of named shapes + little-endian float32 payloads.
void write_table(const std::string& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> read_table(const std::string& path);

// Model + optimizer state under canonical names: parameters and buffers by
// registry name, Adam moments as opt.<param>.m / opt.<param>.v, and the
// global step count as opt.step.
template <typename S>
std::vector<NamedArray> collect_state(net::Network<S>& model,
                                      const std::vector<ad::AdamState<S>>* opt_states) {
  std::vector<NamedArray> out;
  auto push = [&](const std::string& name, const ad::ArrayX<S>& a,
                  std::vector<long> dims) {
    NamedArray e;
    e.name = name;
    e.dims = std::move(dims);
    e.values.resize(a.size());
    for (long i = 0; i < a.size(); ++i) e.values[i] = static_cast<float>(a[i]);
    out.push_back(std::move(e));
  };
  for (auto& p : model.parameters()) push(p.name, p.tensor.values(), p.tensor.shape());
  for (auto& b : model.buffers()) push(b.name, *b.values, {b.values->size()});
  if (opt_states != nullptr) {
    const auto& params = model.parameters();
    if (opt_states->size() != params.size()) {
      throw UsageError("checkpoint: optimizer state arity mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      push("opt." + params[i].name + ".m", (*opt_states)[i].m, params[i].tensor.shape());
      push("opt." + params[i].name + ".v", (*opt_states)[i].v, params[i].tensor.shape());
    }
    ad::ArrayX<S> step(1);
    step[0] = static_cast<S>((*opt_states)[0].step);
    push("opt.step", step, {1});
  }
  return out;
}

template <typename S>
void apply_state(net::Network<S>& model, std::vector<ad::AdamState<S>>* opt_states,
                 const std::vector<NamedArray>& entries) {
  auto find = [&](const std::string& name) -> const NamedArray* {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };
  auto load_into = [&](const std::string& name, ad::ArrayX<S>& a) {
    const NamedArray* e = find(name);
    if (e == nullptr) throw DataError("checkpoint: missing tensor '" + name + "'");
    if (static_cast<long>(e->values.size()) != a.size()) {
      throw DataError("checkpoint: size mismatch for '" + name + "'");
    }
    for (long i = 0; i < a.size(); ++i) a[i] = static_cast<S>(e->values[i]);
  };
  for (auto& p : model.parameters()) load_into(p.name, p.tensor.values());
  for (auto& b : model.buffers()) load_into(b.name, *b.values);
  if (opt_states != nullptr) {
    auto& params = model.parameters();
    opt_states->resize(params.size());
    const NamedArray* step = find("opt.step");
    for (std::size_t i = 0; i < params.size(); ++i) {
      (*opt_states)[i] = ad::AdamState<S>::make(params[i].tensor.size());
      load_into("opt." + params[i].name + ".m", (*opt_states)[i].m);
      load_into("opt." + params[i].name + ".v", (*opt_states)[i].v);
      if (step != nullptr) (*opt_states)[i].step = static_cast<long>(step->values[0]);
    }
  }
}

// JSON sidecar recording the architecture plus selection metadata.
struct CheckpointMeta {
  net::ModelConfig config;
  std::uint64_t seed = 0;
  int selected_pass = 0;       // 1-based training pass the state comes from
  double val_kappa = 0;
};

void write_meta(const std::string& path, const CheckpointMeta& meta);
CheckpointMeta read_meta(const std::string& path);

}  // namespace stagenet::ckpt

#endif  // STAGENET_CHECKPOINT_HPP
