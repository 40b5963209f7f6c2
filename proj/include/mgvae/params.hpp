#pragma once

#include "mgvae/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgvae {

struct ParamId {
  std::uint32_t index = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return index != std::numeric_limits<std::uint32_t>::max(); }
  bool operator==(const ParamId&) const = default;
};

// Named trainable tensors. Names are dotted paths ("enc.word.rnn0.fwd.w_x");
// the first component(s) define the training group a tensor belongs to.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const noexcept { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  Tensor& mutable_value(ParamId id) { return values_.at(id.index); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  std::optional<ParamId> find(std::string_view name) const;

  // Parameters whose name starts with any of the prefixes.
  std::vector<ParamId> with_prefix(std::span<const std::string> prefixes) const;
  std::vector<bool> mask(std::span<const std::string> prefixes) const;

  // FNV-1a over names, shapes, and raw value bytes of the selected parameters.
  std::uint64_t checksum(std::span<const std::string> prefixes) const;
  // Rounds every selected value to the nearest 32-bit float.
  void round_to_float(std::span<const std::string> prefixes);
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// One forward/backward evaluation. Binds parameters into a fresh graph on first
// use; parameters outside the trainable mask enter as constants.
class Session {
 public:
  // Empty mask: everything trainable.
  explicit Session(const ParameterSet& params, std::vector<bool> trainable = {});
  static Session inference(const ParameterSet& params);

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  ad::Graph& graph() noexcept { return graph_; }
  const ParameterSet& params() const noexcept { return params_; }

  ad::Var param(ParamId id);
  ad::Var constant(Tensor value) { return graph_.constant(std::move(value)); }

  void backward(ad::Var loss) { graph_.backward(loss); }
  // Gradient per parameter, aligned with the ParameterSet. Unbound or frozen
  // parameters get an empty tensor.
  std::vector<Tensor> gradients() const;

 private:
  const ParameterSet& params_;
  std::vector<bool> trainable_;
  bool all_trainable_;
  ad::Graph graph_;
  std::vector<std::optional<ad::Var>> bound_;
};

struct GradCheckOptions {
  Real step = 1e-5;
  Real tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
  // near-zero gradient entries from amplifying round-off.
  Real denominator_floor = 1e-3;
};

struct ParamGradReport {
  std::string name;
  Real max_rel_error = 0;
  std::size_t worst_index = 0;
  Real analytic = 0;
  Real numeric = 0;
};

struct GradCheckReport {
  std::vector<ParamGradReport> params;
  Real max_rel_error = 0;
  bool passed = true;
};

using LossBuilder = std::function<ad::Var(Session&)>;

// Compares backward() against central finite differences for every parameter
// in `params`. The builder must be deterministic.
GradCheckReport grad_check(ParameterSet& params, const LossBuilder& f, const GradCheckOptions& options = {});

// Same comparison against caller-supplied analytic gradients (one per
// parameter, empty tensors are skipped).
GradCheckReport compare_gradients(ParameterSet& params, const LossBuilder& f,
                                  const std::vector<Tensor>& analytic,
                                  const GradCheckOptions& options = {});

}  // namespace mgvae
