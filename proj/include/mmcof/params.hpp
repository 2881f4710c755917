#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmcof/autograd.hpp"

namespace mmcof {

enum class ParamRole {
    ConvKernel,
    ConvBias,
    DenseWeight,
    DenseBias,
    BnScale,
    BnShift,
    LnScale,
    LnShift,
    RunningStat,  // serialized state that is not updated by the optimizer
};

struct ParamEntry {
    std::string name;
    ag::Var var;
    ParamRole role = ParamRole::ConvKernel;
    bool trainable = true;
};

// Named tensors of a model together with their gradients. Names are unique;
// gradients always share the value's shape.
class ParameterSet {
  public:
    ag::Var add(const std::string& name, Tensor value, ParamRole role, bool trainable = true);
    ag::Var& get(const std::string& name);
    const ag::Var& get(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    void zero_grad();
    long long parameter_count() const;

    // Flat binary container: magic "MMCF", version u32, then per entry
    // (name length u32, name bytes, rank u32, extents u32..., values f32...),
    // all little-endian. Round-trips bit-exactly.
    void save(const std::string& path) const;
    static ParameterSet load(const std::string& path);
    void save_stream(std::ostream& os) const;
    static ParameterSet load_stream(std::istream& is);

  private:
    std::vector<ParamEntry> entries_;
};

}  // namespace mmcof
