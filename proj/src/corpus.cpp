#include "mgvae/corpus.hpp"

#include "mgvae/error.hpp"

#include "binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace mgvae::corpus {

using json = nlohmann::json;

namespace {

constexpr char kMagic[6] = {'M', 'G', 'V', 'A', 'E', '1'};

using io::put_f32;
using io::put_u32;
using io::read_file;
using io::Reader;
using io::write_file;

SegmentSpec read_spec(Reader& r, std::uint32_t count) {
  std::vector<Interval> ivs(count);
  for (auto& iv : ivs) {
    iv.begin = r.u32();
    iv.end = r.u32();
  }
  return SegmentSpec(std::move(ivs));
}

Real position(std::uint32_t t, const Interval& iv) {
  return iv.length() > 1 ? static_cast<Real>(t - iv.begin) / (iv.length() - 1) : Real(0);
}

Real fraction(std::size_t k, std::size_t n) { return n > 1 ? static_cast<Real>(k) / (n - 1) : Real(0); }

constexpr std::uint32_t kPositionalFeatures = 6;

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

void SegmentedUtterance::finalize() {
  const auto T = frames();
  if (T == 0) throw FormatError(id + ": utterance has no frames");
  if (acoustic.rows() != T) {
    throw FormatError(id + ": acoustic frames " + std::to_string(acoustic.rows()) +
                      " != linguistic frames " + std::to_string(T));
  }
  words.validate(T);
  phrases.validate(T);
  if (phrases.size() > words.size()) throw SegmentError(id + ": more phrases than words");
  word_phrase = parent_index(words, phrases);
  // Every phrase must own at least one word for the hierarchy to be a tree.
  std::vector<bool> used(phrases.size());
  for (auto p : word_phrase) used[p] = true;
  if (std::find(used.begin(), used.end(), false) != used.end()) {
    throw SegmentError(id + ": phrase without words");
  }
}

void save_utterance(const SegmentedUtterance& u, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, u.frames());
  put_u32(out, static_cast<std::uint32_t>(u.acoustic.cols()));
  put_u32(out, static_cast<std::uint32_t>(u.linguistic.cols()));
  put_u32(out, static_cast<std::uint32_t>(u.words.size()));
  put_u32(out, static_cast<std::uint32_t>(u.phrases.size()));
  for (const auto* spec : {&u.words, &u.phrases}) {
    for (const auto& iv : *spec) {
      put_u32(out, iv.begin);
      put_u32(out, iv.end);
    }
  }
  for (auto v : u.acoustic.values()) put_f32(out, v);
  for (auto v : u.linguistic.values()) put_f32(out, v);
  write_file(path, out);
}

SegmentedUtterance load_utterance(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  r.magic(kMagic, sizeof kMagic);
  const auto frames = r.u32();
  const auto d_ac = r.u32();
  const auto d_ling = r.u32();
  const auto m = r.u32();
  const auto n = r.u32();
  if (frames == 0 || d_ac == 0 || d_ling == 0 || m == 0 || n == 0) r.fail("zero-sized header field");
  const std::uint64_t expected = sizeof kMagic + 5 * 4 + 8ull * (m + n) + 4ull * frames * (d_ac + d_ling);
  if (expected != bytes.size()) {
    r.fail("size " + std::to_string(bytes.size()) + " does not match header (expected " +
           std::to_string(expected) + ")");
  }
  SegmentedUtterance u;
  u.id = path.stem().string();
  u.words = read_spec(r, m);
  u.phrases = read_spec(r, n);
  u.acoustic = Tensor(frames, d_ac);
  for (auto& v : u.acoustic.values()) v = r.f32();
  u.linguistic = Tensor(frames, d_ling);
  for (auto& v : u.linguistic.values()) v = r.f32();
  try {
    u.finalize();
  } catch (const SegmentError& e) {
    r.fail(e.what());
  }
  return u;
}

SegmentedUtterance load_utterance(const std::filesystem::path& path, const ManifestItem& item,
                                  const CorpusManifest& manifest) {
  auto u = load_utterance(path);
  if (u.acoustic.cols() != manifest.acoustic_dim || u.linguistic.cols() != manifest.linguistic_dim) {
    throw FormatError(path.string() + ": dims " + std::to_string(u.acoustic.cols()) + "/" +
                      std::to_string(u.linguistic.cols()) + " do not match manifest " +
                      std::to_string(manifest.acoustic_dim) + "/" +
                      std::to_string(manifest.linguistic_dim));
  }
  u.id = item.id;
  u.style = item.style;
  return u;
}

std::string CorpusManifest::to_json() const {
  json j;
  j["format"] = "mgvae-manifest";
  j["version"] = 1;
  j["acoustic_dim"] = acoustic_dim;
  j["linguistic_dim"] = linguistic_dim;
  j["latent_dim"] = latent_dim;
  j["channels"] = {{"pitch", channels.pitch}, {"voicing", channels.voicing}, {"energy", channels.energy}};
  j["styles"] = styles;
  j["mixed_styles"] = mixed_styles;
  json items_json = json::array();
  for (const auto& it : items) {
    items_json.push_back({{"id", it.id}, {"path", it.path}, {"style", it.style}, {"split", split_name(it.split)}});
  }
  j["items"] = std::move(items_json);
  return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const auto j = json::parse(text);
    if (j.at("format") != "mgvae-manifest") throw FormatError("not a corpus manifest");
    m.acoustic_dim = j.at("acoustic_dim");
    m.linguistic_dim = j.at("linguistic_dim");
    m.latent_dim = j.at("latent_dim");
    m.channels.pitch = j.at("channels").at("pitch");
    m.channels.voicing = j.at("channels").at("voicing");
    m.channels.energy = j.at("channels").at("energy");
    m.styles = j.at("styles").get<std::vector<std::string>>();
    m.mixed_styles = j.value("mixed_styles", std::vector<std::string>{});
    for (const auto& it : j.at("items")) {
      m.items.push_back({it.at("id"), it.at("path"), it.at("style"), parse_split(it.at("split"))});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void CorpusManifest::validate() const {
  if (acoustic_dim == 0 || linguistic_dim == 0 || latent_dim == 0) throw FormatError("manifest: zero dimension");
  for (auto c : {channels.pitch, channels.voicing, channels.energy}) {
    if (c >= acoustic_dim) throw FormatError("manifest: channel index out of range");
  }
  if (channels.pitch == channels.voicing || channels.pitch == channels.energy || channels.voicing == channels.energy) {
    throw FormatError("manifest: channel roles overlap");
  }
  std::set<std::string> ids;
  const std::set<std::string> style_set(styles.begin(), styles.end());
  for (const auto& it : items) {
    // An id appearing twice would place one utterance in two splits.
    if (!ids.insert(it.id).second) throw FormatError("manifest: duplicate id " + it.id);
    if (!style_set.contains(it.style)) throw FormatError("manifest: unknown style " + it.style);
  }
}

std::vector<const SegmentedUtterance*> Corpus::split(Split s) const {
  std::vector<const SegmentedUtterance*> out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (manifest.items[i].split == s) out.push_back(&utterances[i]);
  }
  return out;
}

const SegmentedUtterance* Corpus::find(const std::string& id) const {
  for (const auto& u : utterances) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

const ManifestItem& Corpus::item(const SegmentedUtterance& u) const {
  return manifest.items.at(static_cast<std::size_t>(&u - utterances.data()));
}

Corpus Corpus::load(const std::filesystem::path& manifest_path) {
  Corpus c;
  c.manifest = CorpusManifest::from_json(read_file(manifest_path));
  const auto dir = manifest_path.parent_path();
  c.utterances.reserve(c.manifest.items.size());
  for (const auto& item : c.manifest.items) {
    c.utterances.push_back(load_utterance(dir / item.path, item, c.manifest));
  }
  return c;
}

void Corpus::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < utterances.size(); ++i) save_utterance(utterances[i], dir / manifest.items[i].path);
  write_file(dir / "manifest.json", manifest.to_json());
}

// ---------------------------------------------------------------------------
// Synthetic generator

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig c;
  c.styles = {
      {"normal", {0.0}, 1.0, 1.0, false},
      {"happy", {2.0, 0, 0.8, 0.6, -0.6, 0.3, 0, -0.3, 0.6, 0, -0.6, 0.3}, 1.2, 1.3, false},
      {"sad", {-2.0, 0, -0.8, -0.3, 0.6, -0.6, 0.3, 0, -0.3, 0.6, 0, -0.6}, 0.7, 0.6, false},
      {"mixed", {}, 1.0, 1.0, true},
  };
  return c;
}

std::string GeneratorConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["utterances_per_style"] = utterances_per_style;
  j["split"] = {{"train", train_ratio}, {"valid", valid_ratio}, {"test", 1.0 - train_ratio - valid_ratio}};
  j["acoustic_dim"] = acoustic_dim;
  j["linguistic_dim"] = linguistic_dim;
  j["latent_dim"] = latent_dim;
  j["words"] = {min_words, max_words};
  j["phrases"] = {min_phrases, max_phrases};
  j["frames_per_word"] = {min_word_frames, max_word_frames};
  j["vocabulary"] = vocabulary;
  j["noise_std"] = noise_std;
  j["phrase_drift_std"] = phrase_drift_std;
  j["word_modulation_std"] = word_modulation_std;
  j["word_correlation"] = word_correlation;
  json st = json::array();
  for (const auto& s : styles) {
    st.push_back({{"name", s.name}, {"offset", s.offset}, {"drift_scale", s.drift_scale},
                  {"modulation_scale", s.modulation_scale}, {"mixed", s.mixed}});
  }
  j["styles"] = std::move(st);
  return j.dump(2) + "\n";
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  GeneratorConfig c = defaults();
  try {
    const auto j = json::parse(text);
    c.seed = j.value("seed", c.seed);
    c.utterances_per_style = j.value("utterances_per_style", c.utterances_per_style);
    if (j.contains("split")) {
      c.train_ratio = j["split"].at("train");
      c.valid_ratio = j["split"].at("valid");
    }
    c.acoustic_dim = j.value("acoustic_dim", c.acoustic_dim);
    c.linguistic_dim = j.value("linguistic_dim", c.linguistic_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    auto range = [&](const char* key, std::uint32_t& lo, std::uint32_t& hi) {
      if (!j.contains(key)) return;
      const auto& r = j.at(key);
      if (!r.is_array() || r.size() != 2) throw ConfigError(std::string(key) + " must be [min, max]");
      lo = r[0];
      hi = r[1];
    };
    range("words", c.min_words, c.max_words);
    range("phrases", c.min_phrases, c.max_phrases);
    range("frames_per_word", c.min_word_frames, c.max_word_frames);
    c.vocabulary = j.value("vocabulary", c.vocabulary);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.phrase_drift_std = j.value("phrase_drift_std", c.phrase_drift_std);
    c.word_modulation_std = j.value("word_modulation_std", c.word_modulation_std);
    c.word_correlation = j.value("word_correlation", c.word_correlation);
    if (j.contains("styles")) {
      c.styles.clear();
      for (const auto& s : j.at("styles")) {
        StyleSpec spec;
        spec.name = s.at("name");
        spec.offset = s.value("offset", std::vector<Real>{});
        spec.drift_scale = s.value("drift_scale", 1.0);
        spec.modulation_scale = s.value("modulation_scale", 1.0);
        spec.mixed = s.value("mixed", false);
        c.styles.push_back(std::move(spec));
      }
    }
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known = {
          "seed", "utterances_per_style", "split", "acoustic_dim", "linguistic_dim", "latent_dim",
          "words", "phrases", "frames_per_word", "vocabulary", "noise_std", "phrase_drift_std",
          "word_modulation_std", "word_correlation", "styles"};
      if (!known.contains(key)) throw ConfigError("unknown generator config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  c.validate();
  return c;
}

void GeneratorConfig::validate() const {
  std::size_t plain = 0;
  std::set<std::string> names;
  for (const auto& s : styles) {
    if (s.name.empty() || !names.insert(s.name).second) throw ConfigError("style names must be unique and non-empty");
    if (s.offset.size() > acoustic_dim) throw ConfigError("style " + s.name + ": offset longer than acoustic_dim");
    if (!s.mixed) ++plain;
  }
  if (styles.size() < 2) throw ConfigError("at least two styles are required");
  if (plain == 0) throw ConfigError("mixed styles need at least one non-mixed style");
  if (utterances_per_style == 0) throw ConfigError("utterances_per_style must be positive");
  if (!(train_ratio > 0) || valid_ratio < 0 || train_ratio + valid_ratio > 1) throw ConfigError("invalid split ratios");
  if (acoustic_dim < 4) throw ConfigError("acoustic_dim must be at least 4 (pitch, voicing, energy, cepstral)");
  if (linguistic_dim <= kPositionalFeatures) throw ConfigError("linguistic_dim must exceed 6");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (min_words == 0 || min_words > max_words) throw ConfigError("invalid word count range");
  if (min_phrases == 0 || min_phrases > max_phrases || min_phrases > min_words) throw ConfigError("invalid phrase count range");
  if (min_word_frames == 0 || min_word_frames > max_word_frames) throw ConfigError("invalid frames-per-word range");
  if (vocabulary == 0) throw ConfigError("vocabulary must be positive");
  if (noise_std < 0 || phrase_drift_std < 0 || word_modulation_std < 0) throw ConfigError("negative std");
  if (!(std::abs(word_correlation) < 1)) throw ConfigError("word_correlation must lie in (-1, 1)");
}

Tensor linguistic_features(std::span<const std::uint32_t> symbols, const SegmentSpec& words,
                           const SegmentSpec& phrases, std::uint32_t dim) {
  if (dim <= kPositionalFeatures) throw ConfigError("linguistic_dim must exceed 6");
  if (symbols.size() != words.size()) throw SegmentError("one symbol per word required");
  const auto T = words.frames();
  words.validate(T);
  phrases.validate(T);
  const auto word_phrase = parent_index(words, phrases);
  const std::uint32_t embed = dim - kPositionalFeatures;
  Tensor y(T, dim);
  for (std::size_t m = 0; m < words.size(); ++m) {
    // Fixed pseudo-random embedding per symbol, independent of any corpus seed.
    Rng sym_rng(0x5EED0000ULL + symbols[m]);
    std::uniform_real_distribution<Real> unit(-1, 1);
    std::vector<Real> e(embed);
    for (auto& v : e) v = unit(sym_rng);
    const auto& w = words[m];
    const auto p = word_phrase[m];
    const bool phrase_final = m + 1 == words.size() || word_phrase[m + 1] != p;
    for (auto t = w.begin; t < w.end; ++t) {
      auto row = y.row(t);
      std::copy(e.begin(), e.end(), row.begin());
      row[embed + 0] = position(t, w);
      row[embed + 1] = position(t, phrases[p]);
      row[embed + 2] = position(t, Interval{0, T});
      row[embed + 3] = fraction(m, words.size());
      row[embed + 4] = fraction(p, phrases.size());
      row[embed + 5] = phrase_final ? 1 : 0;
    }
  }
  return y;
}

SegmentedUtterance utterance_from_text(const TextSpec& text, std::uint32_t acoustic_dim,
                                       std::uint32_t linguistic_dim, std::string id) {
  if (text.symbols.empty() || text.symbols.size() != text.word_frames.size()) {
    throw SegmentError("text: need one frame count per word symbol");
  }
  std::uint32_t total_words = 0;
  for (auto n : text.phrase_words) {
    if (n == 0) throw SegmentError("text: empty phrase");
    total_words += n;
  }
  if (total_words != text.symbols.size()) throw SegmentError("text: phrase word counts do not sum to word count");
  if (std::find(text.word_frames.begin(), text.word_frames.end(), 0u) != text.word_frames.end()) {
    throw SegmentError("text: word with zero frames");
  }
  SegmentedUtterance u;
  u.id = std::move(id);
  u.words = SegmentSpec::from_lengths(text.word_frames);
  std::vector<std::uint32_t> phrase_frames;
  std::size_t m = 0;
  for (auto n : text.phrase_words) {
    std::uint32_t f = 0;
    for (std::uint32_t k = 0; k < n; ++k) f += text.word_frames[m++];
    phrase_frames.push_back(f);
  }
  u.phrases = SegmentSpec::from_lengths(phrase_frames);
  u.linguistic = linguistic_features(text.symbols, u.words, u.phrases, linguistic_dim);
  u.acoustic = Tensor(u.frames(), acoustic_dim);
  u.finalize();
  return u;
}

namespace {

struct WorldParams {
  Tensor symbol_content;    // [V, D]
  std::vector<Real> phrase_loading;  // [D]
  Tensor word_loading;      // [2, D]
  std::vector<std::vector<Real>> offsets;  // per style [D]
};

WorldParams make_world(const GeneratorConfig& c, const ChannelRoles& roles) {
  const auto D = c.acoustic_dim;
  Rng rng(c.seed ^ 0xA11CE5EEDULL);
  std::normal_distribution<Real> normal(0, 1);
  WorldParams w;
  w.symbol_content = Tensor(c.vocabulary, D);
  for (std::uint32_t v = 0; v < c.vocabulary; ++v) {
    for (std::uint32_t d = 0; d < D; ++d) w.symbol_content(v, d) = 0.8 * normal(rng);
    w.symbol_content(v, roles.pitch) *= 0.6;
    w.symbol_content(v, roles.voicing) = 0;
  }
  w.phrase_loading.assign(D, 0);
  for (std::uint32_t d = 0; d < D; ++d) w.phrase_loading[d] = 0.5 * normal(rng);
  w.phrase_loading[roles.pitch] = 1.0;
  w.phrase_loading[roles.voicing] = 0;
  w.word_loading = Tensor(2, D);
  for (std::uint32_t d = 0; d < D; ++d) {
    w.word_loading(0, d) = 0.4 * normal(rng);
    w.word_loading(1, d) = 0.8 * normal(rng);
  }
  w.word_loading(0, roles.pitch) = 1.0;
  w.word_loading(1, roles.pitch) = 0.2;
  w.word_loading(0, roles.voicing) = w.word_loading(1, roles.voicing) = 0;
  for (const auto& s : c.styles) {
    std::vector<Real> o(D, 0);
    std::copy(s.offset.begin(), s.offset.end(), o.begin());
    o[roles.voicing] = 0;
    w.offsets.push_back(std::move(o));
  }
  return w;
}

SegmentedUtterance generate_one(const GeneratorConfig& c, const WorldParams& world, const ChannelRoles& roles,
                                std::size_t style, std::uint32_t index, const std::vector<std::size_t>& plain) {
  std::seed_seq seq{c.seed, std::uint64_t{style}, std::uint64_t{index}, std::uint64_t{0xC0FFEE}};
  Rng rng(seq);
  auto uniform_int = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  std::normal_distribution<Real> normal(0, 1);

  const auto M = uniform_int(c.min_words, c.max_words);
  const auto N = uniform_int(c.min_phrases, std::min(c.max_phrases, M));
  // N-1 distinct cut points among the M-1 word gaps.
  std::vector<std::uint32_t> gaps(M - 1);
  for (std::uint32_t i = 0; i < gaps.size(); ++i) gaps[i] = i + 1;
  std::shuffle(gaps.begin(), gaps.end(), rng);
  std::vector<std::uint32_t> cuts(gaps.begin(), gaps.begin() + (N - 1));
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(M);

  TextSpec text;
  for (std::uint32_t m = 0; m < M; ++m) {
    text.symbols.push_back(uniform_int(0, c.vocabulary - 1));
    text.word_frames.push_back(uniform_int(c.min_word_frames, c.max_word_frames));
  }
  std::uint32_t prev = 0;
  for (auto cut : cuts) {
    text.phrase_words.push_back(cut - prev);
    prev = cut;
  }

  const auto& spec = c.styles[style];
  auto u = utterance_from_text(text, c.acoustic_dim, c.linguistic_dim,
                               spec.name + "_" + std::string(4 - std::min<std::size_t>(4, std::to_string(index).size()), '0') +
                                   std::to_string(index));
  u.style = spec.name;

  const auto D = c.acoustic_dim;
  Real b[2] = {c.word_modulation_std * normal(rng), c.word_modulation_std * normal(rng)};
  const Real innovation = std::sqrt(1 - c.word_correlation * c.word_correlation);
  std::uint32_t m = 0;
  for (std::uint32_t p = 0; p < N; ++p) {
    const std::size_t phrase_style = spec.mixed ? plain[uniform_int(0, static_cast<std::uint32_t>(plain.size() - 1))] : style;
    const auto& ps = c.styles[phrase_style];
    const Real drift = c.phrase_drift_std * ps.drift_scale * normal(rng);
    const auto& phrase = u.phrases[p];
    for (; m < M && u.word_phrase[m] == p; ++m) {
      if (m > 0) {
        for (auto& bk : b) bk = c.word_correlation * bk + innovation * c.word_modulation_std * normal(rng);
      }
      const auto& w = u.words[m];
      const auto sym = text.symbols[m];
      const std::uint32_t unvoiced = sym % 3 == 0 ? std::min<std::uint32_t>(3, w.length() / 3) : 0;
      for (auto t = w.begin; t < w.end; ++t) {
        const Real pos_w = position(t, w);
        const Real pos_p = position(t, phrase);
        const Real bump = 0.75 + 0.25 * std::sin(std::numbers::pi * pos_w);
        auto row = u.acoustic.row(t);
        for (std::uint32_t d = 0; d < D; ++d) {
          Real v = world.offsets[phrase_style][d] + world.symbol_content(sym, d) +
                   drift * world.phrase_loading[d] * (1 - 0.5 * pos_p) +
                   ps.modulation_scale * bump * (b[0] * world.word_loading(0, d) + b[1] * world.word_loading(1, d)) +
                   c.noise_std * normal(rng);
          if (d == roles.pitch) v -= 0.4 * pos_p;
          row[d] = v;
        }
        row[roles.voicing] = t - w.begin < unvoiced ? 0 : 1;
      }
    }
  }
  // Stored at file precision so in-memory and reloaded corpora agree exactly.
  for (auto* x : {&u.acoustic, &u.linguistic}) {
    for (auto& v : x->values()) v = static_cast<float>(v);
  }
  return u;
}

}  // namespace

Corpus generate_synthetic(const GeneratorConfig& config) {
  config.validate();
  Corpus corpus;
  auto& man = corpus.manifest;
  man.acoustic_dim = config.acoustic_dim;
  man.linguistic_dim = config.linguistic_dim;
  man.latent_dim = config.latent_dim;
  std::vector<std::size_t> plain;
  for (std::size_t s = 0; s < config.styles.size(); ++s) {
    man.styles.push_back(config.styles[s].name);
    if (config.styles[s].mixed) {
      man.mixed_styles.push_back(config.styles[s].name);
    } else {
      plain.push_back(s);
    }
  }
  const auto world = make_world(config, man.channels);
  const auto n = config.utterances_per_style;
  const auto n_train = static_cast<std::uint32_t>(std::lround(n * config.train_ratio));
  const auto n_valid = std::min(n - n_train, static_cast<std::uint32_t>(std::lround(n * config.valid_ratio)));
  for (std::size_t s = 0; s < config.styles.size(); ++s) {
    std::vector<std::uint32_t> order(n);
    for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
    std::seed_seq split_seq{config.seed, std::uint64_t{s}, std::uint64_t{0x5917}};
    Rng split_rng(split_seq);
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<Split> split_of(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      split_of[order[k]] = k < n_train ? Split::train : k < n_train + n_valid ? Split::valid : Split::test;
    }
    for (std::uint32_t i = 0; i < n; ++i) {
      auto u = generate_one(config, world, man.channels, s, i, plain);
      man.items.push_back({u.id, u.id + ".mgv", u.style, split_of[i]});
      corpus.utterances.push_back(std::move(u));
    }
  }
  man.validate();
  return corpus;
}

}  // namespace mgvae::corpus
