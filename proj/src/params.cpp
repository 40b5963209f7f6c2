#include "mgvae/params.hpp"

#include "mgvae/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mgvae {

namespace {

bool has_any_prefix(const std::string& name, std::span<const std::string> prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.starts_with(p); });
}

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

ParamId ParameterSet::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
  const auto id = static_cast<std::uint32_t>(values_.size());
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return ParamId{id};
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

std::vector<ParamId> ParameterSet::with_prefix(std::span<const std::string> prefixes) const {
  std::vector<ParamId> out;
  for (std::uint32_t i = 0; i < names_.size(); ++i) {
    if (has_any_prefix(names_[i], prefixes)) out.push_back(ParamId{i});
  }
  return out;
}

std::vector<bool> ParameterSet::mask(std::span<const std::string> prefixes) const {
  std::vector<bool> out(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) out[i] = has_any_prefix(names_[i], prefixes);
  return out;
}

std::uint64_t ParameterSet::checksum(std::span<const std::string> prefixes) const {
  std::uint64_t h = 14695981039346656037ULL;
  for (auto id : with_prefix(prefixes)) {
    const auto& n = names_[id.index];
    const auto& v = values_[id.index];
    fnv_mix(h, n.data(), n.size());
    const std::uint64_t dims[2] = {v.rows(), v.cols()};
    fnv_mix(h, dims, sizeof dims);
    fnv_mix(h, v.data(), v.size() * sizeof(Real));
  }
  return h;
}

void ParameterSet::round_to_float(std::span<const std::string> prefixes) {
  for (auto id : with_prefix(prefixes)) {
    for (auto& x : values_[id.index].values()) x = static_cast<Real>(static_cast<float>(x));
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Session::Session(const ParameterSet& params, std::vector<bool> trainable)
    : params_(params),
      trainable_(std::move(trainable)),
      all_trainable_(trainable_.empty()),
      bound_(params.size()) {
  if (!all_trainable_ && trainable_.size() != params.size()) {
    throw ConfigError("trainable mask size does not match parameter count");
  }
}

Session Session::inference(const ParameterSet& params) {
  return Session(params, std::vector<bool>(params.size(), false));
}

ad::Var Session::param(ParamId id) {
  if (id.index >= bound_.size()) throw ConfigError("parameter id out of range");
  auto& slot = bound_[id.index];
  if (!slot) {
    const bool trainable = all_trainable_ || trainable_[id.index];
    slot = graph_.reference(params_.value(id), trainable);
  }
  return *slot;
}

std::vector<Tensor> Session::gradients() const {
  std::vector<Tensor> out(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i] && graph_.requires_grad(*bound_[i])) out[i] = graph_.grad(*bound_[i]);
  }
  return out;
}

namespace {

Real evaluate(const ParameterSet& params, const LossBuilder& f) {
  Session s = Session::inference(params);
  return f(s).value().item();
}

}  // namespace

GradCheckReport compare_gradients(ParameterSet& params, const LossBuilder& f,
                                  const std::vector<Tensor>& analytic,
                                  const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw ConfigError("compare_gradients: expected one gradient per parameter");
  }
  GradCheckReport report;
  for (std::uint32_t p = 0; p < params.size(); ++p) {
    const ParamId id{p};
    const Tensor& a = analytic[p];
    if (a.empty()) continue;
    if (a.shape() != params.value(id).shape()) {
      throw ShapeError("compare_gradients", params.name(id) + " gradient " + shape_string(a) +
                                                " vs value " + shape_string(params.value(id)));
    }
    ParamGradReport r;
    r.name = params.name(id);
    for (std::size_t i = 0; i < a.size(); ++i) {
      Real& x = params.mutable_value(id)[i];
      const Real saved = x;
      x = saved + options.step;
      const Real up = evaluate(params, f);
      x = saved - options.step;
      const Real down = evaluate(params, f);
      x = saved;
      const Real numeric = (up - down) / (2 * options.step);
      const Real denom = std::max({std::abs(a[i]), std::abs(numeric), options.denominator_floor});
      const Real rel = std::abs(a[i] - numeric) / denom;
      if (!(rel <= r.max_rel_error)) {
        r.max_rel_error = rel;
        r.worst_index = i;
        r.analytic = a[i];
        r.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
    if (!(r.max_rel_error < options.tolerance)) report.passed = false;
    report.params.push_back(std::move(r));
  }
  return report;
}

GradCheckReport grad_check(ParameterSet& params, const LossBuilder& f, const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("grad_check: step must be positive");
  std::vector<Tensor> analytic;
  {
    Session s(params);
    auto loss = f(s);
    s.backward(loss);
    analytic = s.gradients();
  }
  // Parameters the loss never touched have zero analytic gradient.
  for (std::uint32_t p = 0; p < params.size(); ++p) {
    if (analytic[p].empty()) {
      const auto& v = params.value(ParamId{p});
      analytic[p] = Tensor(v.rows(), v.cols());
    }
  }
  return compare_gradients(params, f, analytic, options);
}

}  // namespace mgvae
