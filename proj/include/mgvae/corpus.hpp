#pragma once

#include "mgvae/segment.hpp"
#include "mgvae/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mgvae::corpus {

// One frame-aligned item: acoustic features X, linguistic features Y, and the
// word/phrase segmentation of its frames.
struct SegmentedUtterance {
  std::string id;
  std::string style;
  Tensor acoustic;    // [T, D_ac]
  Tensor linguistic;  // [T, D_ling]
  SegmentSpec words;    // M intervals
  SegmentSpec phrases;  // N intervals
  std::vector<std::uint32_t> word_phrase;  // containing phrase of each word

  std::uint32_t frames() const { return static_cast<std::uint32_t>(linguistic.rows()); }

  // Checks every structural invariant and fills word_phrase. Throws
  // SegmentError or FormatError.
  void finalize();
};

enum class Split { train, valid, test };
const char* split_name(Split s);
Split parse_split(const std::string& s);

struct ChannelRoles {
  std::uint32_t pitch = 0;
  std::uint32_t voicing = 1;
  std::uint32_t energy = 2;
};

struct ManifestItem {
  std::string id;
  std::string path;  // relative to the manifest directory
  std::string style;
  Split split = Split::train;
};

struct CorpusManifest {
  std::vector<ManifestItem> items;
  std::uint32_t acoustic_dim = 12;
  std::uint32_t linguistic_dim = 16;
  std::uint32_t latent_dim = 2;
  ChannelRoles channels;
  std::vector<std::string> styles;  // ordered style table; mixed styles flagged below
  std::vector<std::string> mixed_styles;

  std::string to_json() const;
  static CorpusManifest from_json(const std::string& text);
  void validate() const;
};

// Binary utterance file: "MGVAE1", then u32 LE frames, D_ac, D_ling, M, N;
// M word (start, end) pairs and N phrase pairs as u32 LE; then X and Y as
// row-major f32 LE.
void save_utterance(const SegmentedUtterance& u, const std::filesystem::path& path);
// id is the file stem; style is empty.
SegmentedUtterance load_utterance(const std::filesystem::path& path);
// Also checks dims against the manifest and takes id/style from the item.
SegmentedUtterance load_utterance(const std::filesystem::path& path, const ManifestItem& item,
                                  const CorpusManifest& manifest);

struct Corpus {
  CorpusManifest manifest;
  std::vector<SegmentedUtterance> utterances;  // aligned with manifest.items

  std::vector<const SegmentedUtterance*> split(Split s) const;
  const SegmentedUtterance* find(const std::string& id) const;
  const ManifestItem& item(const SegmentedUtterance& u) const;

  static Corpus load(const std::filesystem::path& manifest_path);
  // Writes manifest.json plus one file per utterance into dir.
  void save(const std::filesystem::path& dir) const;
};

struct StyleSpec {
  std::string name;
  std::vector<Real> offset;  // per acoustic channel; shorter vectors are zero-padded
  Real drift_scale = 1;
  Real modulation_scale = 1;
  bool mixed = false;  // phrases draw their style from the non-mixed styles
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::vector<StyleSpec> styles;
  std::uint32_t utterances_per_style = 100;
  Real train_ratio = 0.7;
  Real valid_ratio = 0.05;
  std::uint32_t acoustic_dim = 12;
  std::uint32_t linguistic_dim = 16;
  std::uint32_t latent_dim = 2;
  std::uint32_t min_words = 4, max_words = 8;
  std::uint32_t min_phrases = 2, max_phrases = 3;
  std::uint32_t min_word_frames = 10, max_word_frames = 30;
  std::uint32_t vocabulary = 12;
  Real noise_std = 0.1;
  Real phrase_drift_std = 0.5;
  Real word_modulation_std = 0.6;
  Real word_correlation = 0.7;  // AR(1) coefficient of word modulation within an utterance

  // normal / happy / sad / mixed with pitch offsets 0, +2, -2.
  static GeneratorConfig defaults();
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
  void validate() const;  // throws ConfigError
};

Corpus generate_synthetic(const GeneratorConfig& config);

// Text-analogue description of an utterance: word symbols, frame count per
// word, and the number of words in each phrase.
struct TextSpec {
  std::vector<std::uint32_t> symbols;
  std::vector<std::uint32_t> word_frames;
  std::vector<std::uint32_t> phrase_words;
};

// Frame-level linguistic features: a fixed embedding of each word symbol plus
// positional features. Depends only on the text, never on acoustics.
Tensor linguistic_features(std::span<const std::uint32_t> symbols, const SegmentSpec& words,
                           const SegmentSpec& phrases, std::uint32_t dim);

// Utterance with linguistic features built from text and zero acoustics.
SegmentedUtterance utterance_from_text(const TextSpec& text, std::uint32_t acoustic_dim,
                                       std::uint32_t linguistic_dim, std::string id = "text");

}  // namespace mgvae::corpus
