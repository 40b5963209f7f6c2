#include "mgvae/metrics.hpp"

#include "mgvae/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace mgvae::metrics {

namespace {

void require_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(op, "reference " + shape_string(a) + " vs synthesized " + shape_string(b));
  }
  if (a.rows() == 0) throw ShapeError(op, "no frames");
}

void require_channels(const char* op, const Tensor& a, const ChannelMap& c) {
  try {
    c.validate(a.cols());
  } catch (const ConfigError& e) {
    throw ShapeError(op, e.what());
  }
}

}  // namespace

ChannelMap ChannelMap::from_roles(const corpus::ChannelRoles& roles, std::uint32_t acoustic_dim) {
  ChannelMap m;
  m.pitch = roles.pitch;
  m.voicing = roles.voicing;
  for (std::uint32_t d = 0; d < acoustic_dim; ++d) {
    if (d != roles.pitch && d != roles.voicing && d != roles.energy) m.cepstral.push_back(d);
  }
  m.validate(acoustic_dim);
  return m;
}

void ChannelMap::validate(std::size_t acoustic_dim) const {
  if (cepstral.empty()) throw ConfigError("no cepstral channels");
  for (auto d : cepstral) {
    if (d >= acoustic_dim) throw ConfigError("cepstral channel " + std::to_string(d) + " out of range");
  }
  if (pitch >= acoustic_dim || voicing >= acoustic_dim) throw ConfigError("pitch/voicing channel out of range");
}

Real mcd(const Tensor& ref, const Tensor& syn, const ChannelMap& c) {
  require_pair("mcd", ref, syn);
  require_channels("mcd", ref, c);
  Real total = 0;
  for (std::size_t t = 0; t < ref.rows(); ++t) {
    Real ss = 0;
    for (auto d : c.cepstral) ss += (ref(t, d) - syn(t, d)) * (ref(t, d) - syn(t, d));
    total += std::sqrt(2 * ss);
  }
  return 10 / std::numbers::ln10 * total / static_cast<Real>(ref.rows());
}

namespace {

Real variance(const Tensor& x, std::uint32_t d) {
  Real mean = 0;
  for (std::size_t t = 0; t < x.rows(); ++t) mean += x(t, d);
  mean /= static_cast<Real>(x.rows());
  Real v = 0;
  for (std::size_t t = 0; t < x.rows(); ++t) v += (x(t, d) - mean) * (x(t, d) - mean);
  return v / static_cast<Real>(x.rows());
}

}  // namespace

Real gvd(std::span<const Tensor> refs, std::span<const Tensor> syns, const ChannelMap& c) {
  if (refs.size() != syns.size()) {
    throw ShapeError("gvd", std::to_string(refs.size()) + " references vs " + std::to_string(syns.size()) + " outputs");
  }
  if (refs.empty()) throw ShapeError("gvd", "no utterances");
  Real total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    require_pair("gvd", refs[i], syns[i]);
    require_channels("gvd", refs[i], c);
    Real per = 0;
    for (auto d : c.cepstral) per += std::abs(variance(refs[i], d) - variance(syns[i], d));
    total += per / static_cast<Real>(c.cepstral.size());
  }
  return total / static_cast<Real>(refs.size());
}

std::optional<Real> f0_rmse(const Tensor& ref, const Tensor& syn, const ChannelMap& c) {
  require_pair("f0_rmse", ref, syn);
  require_channels("f0_rmse", ref, c);
  Real ss = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < ref.rows(); ++t) {
    if (ref(t, c.voicing) <= 0.5) continue;
    const Real diff = ref(t, c.pitch) - syn(t, c.pitch);
    ss += diff * diff;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(ss / static_cast<Real>(n));
}

Real style_separation(const Tensor& z, std::span<const std::size_t> labels) {
  if (labels.size() != z.rows()) {
    throw ShapeError("style_separation", std::to_string(labels.size()) + " labels for " + shape_string(z));
  }
  const std::size_t styles = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> count(styles, 0);
  for (auto l : labels) ++count[l];
  if (std::count_if(count.begin(), count.end(), [](std::size_t n) { return n > 0; }) < 2 ||
      std::count(count.begin(), count.end(), std::size_t{1}) > 0) {
    throw ConfigError("style separation needs at least two styles, each with two or more utterances");
  }
  const std::size_t d = z.cols();
  std::vector<Real> sums(styles * d, 0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) sums[labels[i] * d + j] += z(i, j);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::size_t best = styles;
    Real best_dist = std::numeric_limits<Real>::infinity();
    for (std::size_t s = 0; s < styles; ++s) {
      const std::size_t n = count[s] - (s == labels[i] ? 1 : 0);
      if (n == 0) continue;  // unused label
      Real dist = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const Real sum = sums[s * d + j] - (s == labels[i] ? z(i, j) : 0);
        const Real diff = z(i, j) - sum / static_cast<Real>(n);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = s;
      }
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<Real>(correct) / static_cast<Real>(z.rows());
}

Summary summarize(std::span<const Real> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  for (Real v : values) s.mean += v;
  s.mean /= static_cast<Real>(values.size());
  if (values.size() > 1) {
    Real ss = 0;
    for (Real v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / static_cast<Real>(values.size() - 1) / static_cast<Real>(values.size()));
  }
  return s;
}

namespace {

std::string cell(const Summary& s) {
  if (s.count == 0) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", s.mean, s.std_error);
  return buf;
}

nlohmann::json summary_json(const Summary& s) {
  if (s.count == 0) return {{"mean", nullptr}, {"std_error", nullptr}, {"count", 0}};
  return {{"mean", s.mean}, {"std_error", s.std_error}, {"count", s.count}};
}

}  // namespace

std::string format_table(std::span<const ReportRow> rows) {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.system.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-18s  %-18s  %-18s\n", static_cast<int>(width), "system", "MCD [dB]", "GVD",
                "F0ER");
  out += buf;
  for (const auto& r : rows) {
    // "±" is two bytes but one column; pad by hand.
    std::string line = r.system + std::string(width - r.system.size(), ' ');
    for (const auto* s : {&r.mcd, &r.gvd, &r.f0_rmse}) {
      const auto c = cell(*s);
      const std::size_t cols = c.size() - (c.find("±") == std::string::npos ? 0 : 1);
      line += "  " + c + std::string(cols < 18 ? 18 - cols : 0, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::string report_json(std::span<const ReportRow> rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"system", r.system},
                   {"mcd", summary_json(r.mcd)},
                   {"gvd", summary_json(r.gvd)},
                   {"f0_rmse", summary_json(r.f0_rmse)}});
  }
  return nlohmann::json{{"rows", arr}}.dump(2);
}

}  // namespace mgvae::metrics
