#include "doctest.h"

#include "mgvae/cli.hpp"
#include "tiny.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mgvae;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Byte contents of every file below dir, keyed by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// Work directory with a tiny corpus and a trained tiny model.
struct Workspace {
  fs::path root = fs::temp_directory_path() / "mgvae_cli_test";
  fs::path gen = root / "gen.json", model_cfg = root / "model.json";
  fs::path corpus = root / "corpus", manifest = corpus / "manifest.json", model = root / "model";

  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
    spit(gen, tiny::generator().to_json());
    spit(model_cfg, tiny::model().to_json());
    REQUIRE(cli_run({"gen-corpus", "--out", corpus.string(), "--config", gen.string()}).code == 0);
    const auto r = train(model, {});
    REQUIRE(r.code == 0);
  }
  ~Workspace() { fs::remove_all(root); }

  Run train(const fs::path& dir, std::vector<std::string> extra) const {
    std::vector<std::string> args{"train", "--corpus", manifest.string(), "--model-dir", dir.string(),
                                  "--model-config", model_cfg.string(), "--epochs1", "2", "--epochs2", "1",
                                  "--baseline-epochs", "1", "--lr", "0.01", "--seed", "4"};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli_run(args);
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli_run({}).code == cli::kUsage);
  CHECK(cli_run({"dance"}).code == cli::kUsage);
  CHECK(cli_run({"gen-corpus"}).code == cli::kUsage);
  CHECK(cli_run({"gen-corpus", "--out", "x", "--bogus"}).code == cli::kUsage);
  CHECK(cli_run({"--help"}).code == cli::kOk);
  const auto h = cli_run({"synth", "--help"});
  CHECK(h.code == cli::kOk);
  CHECK(h.out.find("--z-u") != std::string::npos);
  const auto& w = ws();
  CHECK(cli_run({"synth", "--model-dir", w.model.string(), "--text", "1;3;1", "--mode", "XX"}).code == cli::kUsage);
  CHECK(cli_run({"synth", "--model-dir", w.model.string(), "--text", "1;3"}).code == cli::kUsage);
  CHECK(cli_run({"train", "--corpus", w.manifest.string(), "--model-dir", w.model.string(), "--steps", "2",
                 "--no-residual"})
            .code == cli::kUsage);
  CHECK(cli_run({"train", "--corpus", w.manifest.string(), "--model-dir", w.model.string(), "--steps", "3"}).code ==
        cli::kUsage);
  CHECK(cli_run({"eval", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--modes", "best"}).code ==
        cli::kUsage);
}

TEST_CASE("data errors exit 2") {
  const auto& w = ws();
  CHECK(cli_run({"synth", "--model-dir", (w.root / "nothing").string(), "--text", "1;3;1"}).code == cli::kDataError);
  CHECK(cli_run({"eval", "--model-dir", w.model.string(), "--corpus", (w.root / "none.json").string()}).code ==
        cli::kDataError);
  const auto r = cli_run({"synth", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--utterance",
                          "nobody_0000"});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("nobody_0000") != std::string::npos);
  // FG with an utterance latent.
  CHECK(cli_run({"synth", "--model-dir", w.model.string(), "--text", "1;3;1", "--mode", "FG", "--z-u", "0,0"}).code ==
        cli::kDataError);
}

TEST_CASE("divergence exits 3") {
  const auto& w = ws();
  const auto bad = w.root / "bad";
  fs::copy(w.corpus, bad, fs::copy_options::recursive);
  // Poison the first feature value of every utterance file.
  for (const auto& e : fs::directory_iterator(bad)) {
    if (e.path().extension() != ".mgv") continue;
    std::fstream f(e.path(), std::ios::in | std::ios::out | std::ios::binary);
    std::uint32_t header[5];
    f.seekg(6);
    f.read(reinterpret_cast<char*>(header), sizeof header);
    const std::streamoff x_start = 6 + 20 + 8 * (header[3] + header[4]);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    f.seekp(x_start + 4 * 3);
    f.write(reinterpret_cast<const char*>(&nan), 4);
  }
  const auto r = cli_run({"train", "--corpus", (bad / "manifest.json").string(), "--model-dir",
                          (w.root / "bad_model").string(), "--model-config", w.model_cfg.string(), "--epochs1", "1"});
  CHECK(r.code == cli::kDiverged);
  CHECK(r.err.find("diverged") != std::string::npos);
}

TEST_CASE("gen-corpus is reproducible") {
  const auto& w = ws();
  const auto again = w.root / "again";
  const auto r = cli_run({"gen-corpus", "--out", again.string(), "--config", w.gen.string()});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("config {", 0) == 0);
  CHECK(tree(again) == tree(w.corpus));
  const auto other = w.root / "other";
  cli_run({"gen-corpus", "--out", other.string(), "--config", w.gen.string(), "--seed", "8"});
  CHECK(tree(other) != tree(w.corpus));
  CHECK(json::parse(slurp(other / "generator.json"))["seed"] == 8);
}

TEST_CASE("train is reproducible and echoes its config") {
  const auto& w = ws();
  const auto again = w.root / "model_again";
  const auto r = w.train(again, {});
  REQUIRE(r.code == 0);
  const auto first_line = r.out.substr(0, r.out.find('\n'));
  const auto echoed = json::parse(first_line.substr(7));
  CHECK(echoed["command"] == "train");
  CHECK(echoed["config"]["train"]["seed"] == 4);
  CHECK(echoed["config"]["model"]["encoder_hidden"] == 4);
  for (const char* f : {"step1.ckpt", "step2.ckpt", "baselines.ckpt"}) {
    CAPTURE(f);
    CHECK(slurp(again / f) == slurp(w.model / f));
  }
  // Logs match apart from wall-clock time.
  auto strip = [](std::string log) {
    std::string out;
    std::istringstream in(log);
    for (std::string line; std::getline(in, line);) {
      auto j = json::parse(line);
      j.erase("seconds");
      out += j.dump() + "\n";
    }
    return out;
  };
  CHECK(strip(slurp(again / "train_log.jsonl")) == strip(slurp(w.model / "train_log.jsonl")));
  CHECK(json::parse(slurp(again / "train_config.json"))["step1_epochs"] == 2);

  // Ablation flags reach the model config.
  const auto m1 = w.root / "m1";
  REQUIRE(w.train(m1, {"--no-residual", "--no-dec-sharing", "--kl-weight", "0.1,0.2,0.3", "--steps", "1"}).code == 0);
  const auto loaded = Models::load(m1);
  CHECK_FALSE(loaded.config.residual);
  CHECK_FALSE(loaded.config.share_decoder);
  CHECK(loaded.config.kl_weight[2] == 0.3);
  CHECK_FALSE(loaded.has_step2);
  // Step 2 later, on the existing step-1 checkpoint.
  CHECK(cli_run({"train", "--corpus", w.manifest.string(), "--model-dir", m1.string(), "--steps", "2", "--epochs2", "1"})
            .code == 0);
  CHECK(Models::load(m1).has_step2);
}

TEST_CASE("synth is deterministic") {
  const auto& w = ws();
  const auto a = w.root / "a.json", b = w.root / "b.json";
  const std::vector<std::string> base{"synth", "--model-dir", w.model.string(), "--corpus", w.manifest.string(),
                                      "--utterance", "happy_0003", "--mode", "MG+CP+AR", "--z-u", "0.5,-0.3",
                                      "--temperature", "0"};
  auto args = base;
  args.insert(args.end(), {"--out", a.string(), "--seed", "1"});
  REQUIRE(cli_run(args).code == 0);
  args = base;
  args.insert(args.end(), {"--out", b.string(), "--seed", "2"});
  REQUIRE(cli_run(args).code == 0);
  CHECK(slurp(a) == slurp(b));
  const auto j = json::parse(slurp(a));
  CHECK(j["z_u"] == json({0.5, -0.3}));
  CHECK(j["mode"] == "MG+CP+AR");

  // Seeded sampling repeats too.
  const auto c = w.root / "c.json", d = w.root / "d.json";
  for (const auto& p : {c, d}) {
    REQUIRE(cli_run({"synth", "--model-dir", w.model.string(), "--text", "3,1,4;4,5,6;2,1", "--mode", "FG+CP+AR",
                     "--seed", "9", "--out", p.string()})
                .code == 0);
  }
  CHECK(slurp(c) == slurp(d));
  CHECK(json::parse(slurp(c))["z_w"].size() == 3);
  CHECK(json::parse(slurp(c))["z_p"].is_null());
}

TEST_CASE("eval prints one row per system") {
  const auto& w = ws();
  const auto report = w.root / "report.json";
  const auto r = cli_run({"eval", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--modes", "all",
                          "--out", report.string()});
  REQUIRE(r.code == 0);
  for (const char* row : {"oracle-utterance", "oracle-phrase", "oracle-word", "predicted-CP ", "predicted-CP+AR",
                          "\nFG ", "FG+AR", "FG+CP ", "FG+CP+AR", "MG+CP ", "MG+CP+AR"}) {
    CAPTURE(row);
    CHECK(r.out.find(row) != std::string::npos);
  }
  CHECK(r.out.find("MCD [dB]") != std::string::npos);
  CHECK(r.out.find("GVD") != std::string::npos);
  CHECK(r.out.find("F0ER") != std::string::npos);
  const auto j = json::parse(slurp(report));
  CHECK(j["rows"].size() == 11);
  CHECK(j["rows"][0]["mcd"]["count"] == 20);  // 5 test utterances per style
  const auto again = cli_run({"eval", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--modes",
                              "all", "--temperature", "1", "--seed", "3"});
  const auto twice = cli_run({"eval", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--modes",
                              "all", "--temperature", "1", "--seed", "3"});
  CHECK(again.out == twice.out);
  CHECK(again.out != r.out);
}

TEST_CASE("export-latents") {
  const auto& w = ws();
  const auto out = w.root / "latents.jsonl";
  REQUIRE(cli_run({"export-latents", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--levels",
                   "all", "--split", "test", "--out", out.string()})
              .code == 0);
  std::istringstream in(slurp(out));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    const auto j = json::parse(line);
    CHECK(j["split"] == "test");
    CHECK(j["z_u"].size() == 2);
    CHECK(j["z_w"].size() >= 3);
    CHECK(j.contains("style"));
  }
  CHECK(n == 20);
  const auto again = w.root / "latents2.jsonl";
  cli_run({"export-latents", "--model-dir", w.model.string(), "--corpus", w.manifest.string(), "--levels", "all",
           "--split", "test", "--out", again.string()});
  CHECK(slurp(again) == slurp(out));
}
