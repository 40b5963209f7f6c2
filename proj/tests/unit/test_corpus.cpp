#include "doctest.h"

#include "mgvae/corpus.hpp"
#include "mgvae/error.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

using namespace mgvae;
using namespace mgvae::corpus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("mgvae_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GeneratorConfig three_styles() {
  auto c = GeneratorConfig::defaults();
  c.styles.pop_back();  // drop the mixed style
  return c;
}

SegmentedUtterance tiny() {
  TextSpec text{{1, 4, 2}, {2, 3, 1}, {2, 1}};
  auto u = utterance_from_text(text, 4, 8, "tiny");
  for (std::size_t i = 0; i < u.acoustic.size(); ++i) u.acoustic[i] = static_cast<float>(0.25 * i - 1);
  return u;
}

}  // namespace

TEST_CASE("generator is deterministic down to the bytes") {
  auto c = three_styles();
  c.utterances_per_style = 6;
  TempDir a("det_a"), b("det_b");
  generate_synthetic(c).save(a.path);
  generate_synthetic(c).save(b.path);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a.path)) {
    CAPTURE(entry.path().filename().string());
    CHECK(slurp(entry.path()) == slurp(b.path / entry.path().filename()));
    ++files;
  }
  CHECK(files == 19);

  c.seed = 2;
  CHECK_FALSE(generate_synthetic(c).utterances[0].acoustic == generate_synthetic(three_styles()).utterances[0].acoustic);
}

TEST_CASE("three styles of one hundred give 300 items with the requested splits") {
  const auto corpus = generate_synthetic(three_styles());
  REQUIRE(corpus.manifest.items.size() == 300);
  std::map<std::string, std::map<Split, int>> counts;
  for (const auto& it : corpus.manifest.items) counts[it.style][it.split]++;
  for (const auto& [style, by_split] : counts) {
    CAPTURE(style);
    CHECK(by_split.at(Split::train) == 70);
    CHECK(by_split.at(Split::valid) == 5);
    CHECK(by_split.at(Split::test) == 25);
  }
  CHECK(corpus.split(Split::test).size() == 75);
}

TEST_CASE("every generated utterance satisfies the structural invariants") {
  auto c = GeneratorConfig::defaults();
  c.utterances_per_style = 40;
  const auto corpus = generate_synthetic(c);
  CHECK(corpus.manifest.mixed_styles == std::vector<std::string>{"mixed"});
  for (const auto& u : corpus.utterances) {
    CAPTURE(u.id);
    REQUIRE(u.acoustic.rows() == u.linguistic.rows());
    CHECK(u.words.size() >= 4);
    CHECK(u.words.size() <= 8);
    CHECK(u.phrases.size() >= 2);
    CHECK(u.phrases.size() <= 3);
    CHECK(u.words.tiles(u.frames()));
    CHECK(u.phrases.tiles(u.frames()));
    CHECK(u.word_phrase == parent_index(u.words, u.phrases));
    for (const auto& w : u.words) {
      CHECK(w.length() >= 10);
      CHECK(w.length() <= 30);
    }
    for (std::uint32_t t = 0; t < u.frames(); ++t) {
      const Real v = u.acoustic(t, corpus.manifest.channels.voicing);
      CHECK((v == 0 || v == 1));
    }
    CHECK(u.acoustic.all_finite());
  }
}

TEST_CASE("linguistic features depend only on the text") {
  auto c = three_styles();
  c.utterances_per_style = 3;
  const auto corpus = generate_synthetic(c);
  for (const auto& u : corpus.utterances) {
    // Recover the symbols by matching the embedding against every vocabulary entry.
    TextSpec text;
    for (const auto& w : u.words) {
      text.word_frames.push_back(w.length());
      bool found = false;
      for (std::uint32_t sym = 0; sym < c.vocabulary && !found; ++sym) {
        const std::uint32_t one = sym;
        auto probe = linguistic_features(std::span(&one, 1), SegmentSpec::whole(1), SegmentSpec::whole(1), 16);
        if (std::equal(probe.row(0).begin(), probe.row(0).begin() + 10, u.linguistic.row(w.begin).begin(),
                       [](Real a, Real b) { return static_cast<float>(a) == b; })) {
          text.symbols.push_back(sym);
          found = true;
        }
      }
      REQUIRE(found);
    }
    std::uint32_t prev = 0;
    for (std::size_t m = 1; m <= u.word_phrase.size(); ++m) {
      if (m == u.word_phrase.size() || u.word_phrase[m] != u.word_phrase[m - 1]) {
        text.phrase_words.push_back(static_cast<std::uint32_t>(m) - prev);
        prev = static_cast<std::uint32_t>(m);
      }
    }
    auto rebuilt = utterance_from_text(text, 12, 16);
    for (std::size_t i = 0; i < rebuilt.linguistic.size(); ++i) {
      CHECK(static_cast<float>(rebuilt.linguistic[i]) == u.linguistic[i]);
    }
  }
}

TEST_CASE("style offsets on the pitch channel are recoverable by averaging") {
  // Per-style mean of channel 0 over utterance means; the spread of utterance
  // means gives the standard error.
  const auto corpus = generate_synthetic(three_styles());
  std::map<std::string, std::vector<Real>> per_style;
  for (const auto& u : corpus.utterances) {
    Real s = 0;
    for (std::uint32_t t = 0; t < u.frames(); ++t) s += u.acoustic(t, 0);
    per_style[u.style].push_back(s / u.frames());
  }
  auto stats = [](const std::vector<Real>& v) {
    Real mean = 0, sq = 0;
    for (auto x : v) mean += x;
    mean /= v.size();
    for (auto x : v) sq += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(sq / (v.size() - 1) / v.size())};
  };
  const auto [normal, se_n] = stats(per_style["normal"]);
  const auto [happy, se_h] = stats(per_style["happy"]);
  const auto [sad, se_s] = stats(per_style["sad"]);
  CHECK(std::abs((happy - normal) - 2) < 0.1);
  CHECK(std::abs((normal - sad) - 2) < 0.1);
  CHECK(std::abs((happy - normal) - 2) < 3 * std::hypot(se_h, se_n));
  CHECK(std::abs((normal - sad) - 2) < 3 * std::hypot(se_n, se_s));
}

TEST_CASE("mixed utterances blend phrase styles") {
  auto c = GeneratorConfig::defaults();
  c.utterances_per_style = 60;
  c.noise_std = 0;
  c.phrase_drift_std = 0;
  c.word_modulation_std = 0;
  const auto corpus = generate_synthetic(c);
  // Without drift or modulation each phrase sits on a style offset, so the
  // channel-0 spread between phrases reveals mixing.
  int blended = 0;
  for (const auto& u : corpus.utterances) {
    if (u.style != "mixed") continue;
    std::vector<Real> phrase_mean;
    for (const auto& p : u.phrases) {
      Real s = 0;
      for (auto t = p.begin; t < p.end; ++t) s += u.acoustic(t, 0) + 0.4 * (p.length() > 1 ? Real(t - p.begin) / (p.length() - 1) : 0);
      phrase_mean.push_back(s / p.length());
    }
    const auto [lo, hi] = std::minmax_element(phrase_mean.begin(), phrase_mean.end());
    if (*hi - *lo > 2.5) ++blended;
  }
  CHECK(blended > 10);
}

TEST_CASE("save then load round trips every field") {
  TempDir dir("rt");
  const auto u = tiny();
  save_utterance(u, dir.path / "tiny.mgv");
  const auto back = load_utterance(dir.path / "tiny.mgv");
  CHECK(back.id == "tiny");
  CHECK(back.acoustic == u.acoustic);
  CHECK(back.linguistic.map().isApprox(u.linguistic.map(), 1e-6));
  CHECK(back.words == u.words);
  CHECK(back.phrases == u.phrases);
  CHECK(back.word_phrase == u.word_phrase);

  auto c = three_styles();
  c.utterances_per_style = 4;
  const auto corpus = generate_synthetic(c);
  corpus.save(dir.path / "corpus");
  const auto loaded = Corpus::load(dir.path / "corpus" / "manifest.json");
  REQUIRE(loaded.utterances.size() == corpus.utterances.size());
  for (std::size_t i = 0; i < loaded.utterances.size(); ++i) {
    CHECK(loaded.utterances[i].id == corpus.utterances[i].id);
    CHECK(loaded.utterances[i].style == corpus.utterances[i].style);
    CHECK(loaded.utterances[i].acoustic == corpus.utterances[i].acoustic);
    CHECK(loaded.utterances[i].linguistic == corpus.utterances[i].linguistic);
    CHECK(loaded.manifest.items[i].split == corpus.manifest.items[i].split);
  }
}

TEST_CASE("file header layout is little-endian and fixed") {
  TempDir dir("hdr");
  save_utterance(tiny(), dir.path / "t.mgv");
  const auto bytes = slurp(dir.path / "t.mgv");
  CHECK(bytes.substr(0, 6) == "MGVAE1");
  const unsigned char frames[] = {6, 0, 0, 0};
  CHECK(std::equal(frames, frames + 4, reinterpret_cast<const unsigned char*>(bytes.data() + 6)));
  CHECK(bytes.size() == 6 + 20 + 8 * 5 + 4 * 6 * (4 + 8));
}

TEST_CASE("malformed files raise structured errors") {
  TempDir dir("bad");
  const auto good_path = dir.path / "good.mgv";
  save_utterance(tiny(), good_path);
  const auto good = slurp(good_path);

  SUBCASE("truncated") {
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
      CAPTURE(cut);
      dump(dir.path / "t.mgv", good.substr(0, cut));
      CHECK_THROWS_AS(load_utterance(dir.path / "t.mgv"), FormatError);
    }
  }
  SUBCASE("bad magic") {
    auto bytes = good;
    bytes[0] = 'X';
    dump(dir.path / "t.mgv", bytes);
    CHECK_THROWS_AS(load_utterance(dir.path / "t.mgv"), FormatError);
  }
  SUBCASE("word crossing a phrase boundary") {
    // Phrases are words {0,1} and {2}; move the first phrase end inside word 1.
    auto bytes = good;
    const std::size_t phrase0_end = 6 + 20 + 3 * 8 + 4;
    bytes[phrase0_end] = 3;
    bytes[phrase0_end + 4] = 3;  // second phrase starts where the first now ends
    dump(dir.path / "t.mgv", bytes);
    CHECK_THROWS_AS(load_utterance(dir.path / "t.mgv"), FormatError);
  }
  SUBCASE("gap in word tiling") {
    auto bytes = good;
    bytes[6 + 20 + 8] = 3;  // word 1 begins at 3 instead of 2
    dump(dir.path / "t.mgv", bytes);
    CHECK_THROWS_AS(load_utterance(dir.path / "t.mgv"), FormatError);
  }
  SUBCASE("dims disagree with the manifest") {
    CorpusManifest m;
    m.styles = {"a"};
    ManifestItem item{"good", "good.mgv", "a", Split::train};
    CHECK_THROWS_AS(load_utterance(good_path, item, m), FormatError);
    m.acoustic_dim = 4;
    m.linguistic_dim = 8;
    CHECK(load_utterance(good_path, item, m).style == "a");
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_utterance(dir.path / "nope.mgv"), FormatError); }
}

TEST_CASE("text specs enforce the hierarchy") {
  CHECK_THROWS_AS(utterance_from_text({{1, 2}, {3, 3}, {3}}, 4, 8), SegmentError);
  CHECK_THROWS_AS(utterance_from_text({{1, 2}, {3, 0}, {1, 1}}, 4, 8), SegmentError);
  CHECK_THROWS_AS(utterance_from_text({{1}, {3, 3}, {1}}, 4, 8), SegmentError);
  const auto u = utterance_from_text({{1}, {1}, {1}}, 4, 8);
  CHECK(u.frames() == 1);
  CHECK(u.word_phrase == std::vector<std::uint32_t>{0});
}

TEST_CASE("manifest json round trips and rejects inconsistencies") {
  auto c = three_styles();
  c.utterances_per_style = 3;
  const auto m = generate_synthetic(c).manifest;
  const auto back = CorpusManifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());

  auto dup = m;
  dup.items.push_back(dup.items.front());
  CHECK_THROWS_AS(CorpusManifest::from_json(dup.to_json()), FormatError);
  auto unknown = m;
  unknown.items.front().style = "angry";
  CHECK_THROWS_AS(CorpusManifest::from_json(unknown.to_json()), FormatError);
  CHECK_THROWS_AS(CorpusManifest::from_json("{"), FormatError);
}

TEST_CASE("generator config round trips and validates") {
  const auto c = GeneratorConfig::defaults();
  CHECK(GeneratorConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(GeneratorConfig::from_json(R"({"seed": 9})").seed == 9);
  CHECK_THROWS_AS(GeneratorConfig::from_json(R"({"sed": 9})"), ConfigError);
  CHECK_THROWS_AS(GeneratorConfig::from_json(R"({"styles": [{"name": "only"}]})"), ConfigError);
  CHECK_THROWS_AS(GeneratorConfig::from_json(R"({"words": [5, 3]})"), ConfigError);
  CHECK_THROWS_AS(GeneratorConfig::from_json(R"({"split": {"train": 0.9, "valid": 0.2}})"), ConfigError);
}
