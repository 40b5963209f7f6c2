#include "mgvae/cli.hpp"

#include "mgvae/error.hpp"
#include "mgvae/evaluation.hpp"
#include "mgvae/service.hpp"
#include "mgvae/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <thread>
#include <optional>
#include <sstream>

namespace mgvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + path.string());
}

std::vector<Real> parse_reals(const std::string& text, const char* what) {
  std::vector<Real> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad number '") + part + "' in " + what);
    }
  }
  return out;
}

std::vector<std::uint32_t> parse_counts(const std::string& text) {
  std::vector<std::uint32_t> out;
  for (Real v : parse_reals(text, "--text")) {
    if (v < 0 || v != std::floor(v) || v > 1e9) throw ConfigError("--text expects non-negative integers");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

// "symbols;frames per word;words per phrase", e.g. "3,1,4;10,12,9;2,1".
corpus::TextSpec parse_text(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) parts.push_back(part);
  if (parts.size() != 3) throw ConfigError("--text expects 'symbols;frames;phrase_words'");
  return {parse_counts(parts[0]), parse_counts(parts[1]), parse_counts(parts[2])};
}

json tensor_json(const Tensor& t) {
  auto rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back(std::vector<Real>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

void echo(std::ostream& out, const std::string& command, const json& config) {
  out << "config " << json{{"command", command}, {"config", config}}.dump() << '\n';
}

// ---- subcommands --------------------------------------------------------------

struct GenArgs {
  std::string out_dir, config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> per_style;
};

int gen_corpus(const GenArgs& a, std::ostream& out) {
  auto g = a.config_path.empty() ? corpus::GeneratorConfig::defaults()
                                 : corpus::GeneratorConfig::from_json(read_text(a.config_path));
  if (a.seed) g.seed = *a.seed;
  if (a.per_style) g.utterances_per_style = *a.per_style;
  g.validate();
  echo(out, "gen-corpus", json::parse(g.to_json()));
  const auto c = corpus::generate_synthetic(g);
  c.save(a.out_dir);
  write_text(fs::path(a.out_dir) / "generator.json", g.to_json() + "\n");
  out << "wrote " << c.utterances.size() << " utterances to " << a.out_dir << '\n';
  return kOk;
}

struct TrainArgs {
  std::string corpus, model_dir, steps = "1,2,baselines", config_path, model_config_path;
  std::optional<std::uint64_t> seed;
  std::optional<Real> lr, p_min, decay_epochs;
  std::optional<std::uint32_t> batch, epochs1, epochs2, baseline_epochs, patience, checkpoint_every, latent_dim;
  std::optional<std::string> precision, kl_weight;
  bool no_residual = false, no_dec_sharing = false;
};

int train(const TrainArgs& a, std::ostream& out) {
  bool step1 = false, step2 = false, baselines = false;
  {
    std::stringstream ss(a.steps);
    std::string s;
    while (std::getline(ss, s, ',')) {
      if (s == "1") step1 = true;
      else if (s == "2") step2 = true;
      else if (s == "baselines") baselines = true;
      else throw ConfigError("--steps takes 1, 2 and/or baselines, got '" + s + "'");
    }
  }
  auto t = a.config_path.empty() ? trainer::TrainConfig{} : trainer::TrainConfig::from_json(read_text(a.config_path));
  if (a.seed) t.seed = *a.seed;
  if (a.lr) t.learning_rate = *a.lr;
  if (a.batch) t.batch_size = *a.batch;
  if (a.epochs1) t.step1_epochs = *a.epochs1;
  if (a.epochs2) t.step2_epochs = *a.epochs2;
  if (a.baseline_epochs) t.baseline_epochs = *a.baseline_epochs;
  if (a.patience) t.patience = *a.patience;
  if (a.checkpoint_every) t.checkpoint_every = *a.checkpoint_every;
  if (a.p_min) t.schedule.p_min = *a.p_min;
  if (a.decay_epochs) t.schedule.decay_epochs = *a.decay_epochs;
  if (a.precision) {
    if (*a.precision != "f32" && *a.precision != "f64") throw ConfigError("--precision takes f32 or f64");
    t.precision = *a.precision == "f32" ? trainer::Precision::f32 : trainer::Precision::f64;
  }
  t.validate();

  const bool model_flags = !a.model_config_path.empty() || a.latent_dim || a.kl_weight || a.no_residual ||
                           a.no_dec_sharing;
  const auto corpus = corpus::Corpus::load(a.corpus);
  Models models;
  if (step1) {
    auto mc = a.model_config_path.empty() ? model::ModelConfig{}
                                          : model::ModelConfig::from_json(read_text(a.model_config_path));
    mc.acoustic_dim = corpus.manifest.acoustic_dim;
    mc.linguistic_dim = corpus.manifest.linguistic_dim;
    if (a.model_config_path.empty()) mc.latent_dim = corpus.manifest.latent_dim;
    if (a.latent_dim) mc.latent_dim = *a.latent_dim;
    if (a.kl_weight) {
      const auto w = parse_reals(*a.kl_weight, "--kl-weight");
      if (w.size() == 1) mc.kl_weight = {w[0], w[0], w[0]};
      else if (w.size() == 3) mc.kl_weight = {w[0], w[1], w[2]};
      else throw ConfigError("--kl-weight takes one value or three (utterance,phrase,word)");
    }
    if (a.no_residual) mc.residual = false;
    if (a.no_dec_sharing) mc.share_decoder = false;
    mc.validate();
    models = Models::create(mc, t.seed);
  } else {
    if (model_flags) throw ConfigError("model options only apply when training step 1");
    models = Models::load(a.model_dir);
  }
  echo(out, "train",
       {{"model", json::parse(models.config.to_json())},
        {"train", json::parse(t.to_json())},
        {"steps", a.steps},
        {"corpus", a.corpus},
        {"model_dir", a.model_dir}});

  fs::create_directories(a.model_dir);
  write_text(fs::path(a.model_dir) / "train_config.json", t.to_json() + "\n");
  std::ofstream log(fs::path(a.model_dir) / "train_log.jsonl", step1 ? std::ios::trunc : std::ios::app);
  trainer::TrainOptions o;
  o.log = &log;
  o.model_dir = a.model_dir;
  auto report = [&](const trainer::TrainLog& l) {
    if (l.epochs.empty()) return;
    const auto& last = l.epochs.back();
    out << last.phase << ": " << l.epochs.size() << " epochs" << (l.stopped_early ? " (stopped early)" : "");
    for (const auto& [k, v] : last.train) {
      if (k == "loss" || k == "fit") out << ", train " << k << " " << v;
    }
    for (const auto& [k, v] : last.valid) {
      if (k == "loss" || k == "fit") out << ", valid " << k << " " << v;
    }
    out << '\n';
  };
  if (step1) report(trainer::train_step1(models, corpus, t, o));
  if (step2) report(trainer::train_step2(models, corpus, t, o));
  if (baselines) report(trainer::train_baselines(models, corpus, t, o));
  return kOk;
}

struct SynthArgs {
  std::string model_dir, corpus, utterance, text, mode = "MG+CP+AR", out_path;
  std::optional<std::string> z_u;
  Real temperature = 1;
  std::uint64_t seed = 0;
};

int synth(const SynthArgs& a, std::ostream& out) {
  if (a.utterance.empty() == a.text.empty()) throw ConfigError("give exactly one of --utterance and --text");
  pipelines::Request r;
  r.mode = pipelines::parse_mode(a.mode);
  r.temperature = a.temperature;
  r.seed = a.seed;
  if (a.z_u) r.z_u = Tensor::row_vector(parse_reals(*a.z_u, "--z-u"));
  echo(out, "synth",
       {{"model_dir", a.model_dir},
        {"corpus", a.corpus},
        {"utterance", a.utterance},
        {"text", a.text},
        {"mode", pipelines::mode_name(r.mode)},
        {"z_u", a.z_u ? json(parse_reals(*a.z_u, "--z-u")) : json(nullptr)},
        {"temperature", a.temperature},
        {"seed", a.seed},
        {"out", a.out_path}});
  const auto models = Models::load(a.model_dir);
  corpus::SegmentedUtterance u;
  if (!a.utterance.empty()) {
    if (a.corpus.empty()) throw ConfigError("--utterance needs --corpus");
    const auto c = corpus::Corpus::load(a.corpus);
    const auto* found = c.find(a.utterance);
    if (!found) throw FormatError("no utterance '" + a.utterance + "' in " + a.corpus);
    u = *found;
  } else {
    u = corpus::utterance_from_text(parse_text(a.text), models.config.acoustic_dim, models.config.linguistic_dim);
  }
  const auto result = pipelines::synthesize(models, u, r);
  json j{{"mode", pipelines::mode_name(result.mode)},
         {"id", u.id},
         {"z_w", tensor_json(result.z_w)},
         {"features", tensor_json(result.features)}};
  j["z_u"] = result.z_u ? tensor_json(*result.z_u)[0] : json(nullptr);
  j["z_p"] = result.z_p ? tensor_json(*result.z_p) : json(nullptr);
  auto trace = json::array();
  for (const auto& t : result.trace) {
    trace.push_back({{"level", model::level_name(t.level)}, {"mean", tensor_json(t.mean)}, {"log_var", tensor_json(t.log_var)}});
  }
  j["trace"] = trace;
  if (!a.out_path.empty()) write_text(a.out_path, j.dump(1) + "\n");
  out << pipelines::mode_name(result.mode) << ": " << result.z_w.rows() << " word latents, " << result.features.rows()
      << " frames" << (a.out_path.empty() ? "" : " -> " + a.out_path) << '\n';
  if (result.z_w.rows() >= 2) out << "smoothness " << pipelines::smoothness(result.z_w) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string model_dir, corpus, split = "test", modes = "all", out_path;
  Real temperature = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> limit;
};

int eval(const EvalArgs& a, std::ostream& out) {
  const auto split = corpus::parse_split(a.split);
  const auto systems = evaluation::parse_systems(a.modes);
  evaluation::Options o;
  o.temperature = a.temperature;
  o.seed = a.seed;
  if (!(o.temperature >= 0)) throw ConfigError("--temperature must be >= 0");
  auto names = json::array();
  for (const auto& s : systems) names.push_back(s.name());
  echo(out, "eval",
       {{"model_dir", a.model_dir},
        {"corpus", a.corpus},
        {"split", a.split},
        {"systems", names},
        {"temperature", a.temperature},
        {"seed", a.seed},
        {"limit", a.limit ? json(*a.limit) : json(nullptr)},
        {"out", a.out_path}});
  const auto models = Models::load(a.model_dir);
  const auto c = corpus::Corpus::load(a.corpus);
  auto items = c.split(split);
  if (a.limit && *a.limit < items.size()) items.resize(*a.limit);
  const auto channels = metrics::ChannelMap::from_roles(c.manifest.channels, c.manifest.acoustic_dim);
  std::vector<metrics::ReportRow> rows;
  for (const auto& s : systems) rows.push_back(evaluation::evaluate(models, items, s, channels, o));
  out << metrics::format_table(rows);
  if (!a.out_path.empty()) write_text(a.out_path, metrics::report_json(rows) + "\n");
  return kOk;
}

struct ExportArgs {
  std::string model_dir, corpus, split = "all", levels = "utterance", out_path;
};

int export_latents(const ExportArgs& a, std::ostream& out) {
  if (a.levels != "utterance" && a.levels != "all") throw ConfigError("--levels takes utterance or all");
  std::optional<corpus::Split> split;
  if (a.split != "all") split = corpus::parse_split(a.split);
  echo(out, "export-latents",
       {{"model_dir", a.model_dir}, {"corpus", a.corpus}, {"split", a.split}, {"levels", a.levels}, {"out", a.out_path}});
  const auto models = Models::load(a.model_dir);
  const auto c = corpus::Corpus::load(a.corpus);
  std::string lines;
  std::size_t count = 0;
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const auto& item = c.manifest.items[i];
    if (split && item.split != *split) continue;
    const auto z = model::posterior_means(models.params, models.vae, c.utterances[i]);
    json j{{"id", item.id}, {"style", item.style}, {"split", corpus::split_name(item.split)}, {"z_u", tensor_json(z.z_u)[0]}};
    if (a.levels == "all") {
      j["z_p"] = tensor_json(z.z_p);
      j["z_w"] = tensor_json(z.z_w);
    }
    lines += j.dump() + "\n";
    ++count;
  }
  if (a.out_path.empty()) out << lines;
  else write_text(a.out_path, lines);
  out << "exported " << count << " utterances\n";
  return kOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1", model_dir, corpus;
  int port = 8080;
  std::size_t max_points = 1500;
};

int serve(const ServeArgs& a, std::ostream& out) {
  echo(out, "serve",
       {{"host", a.host}, {"port", a.port}, {"checkpoint", a.model_dir}, {"corpus", a.corpus}, {"max_points", a.max_points}});
  service::Options o;
  o.max_points_per_style = a.max_points;
  service::Service svc(o);
  std::exception_ptr failure;
  std::atomic<bool> done{false};
  std::thread loader([&] {
    try {
      svc.load(Models::load(a.model_dir), corpus::Corpus::load(a.corpus));
      out << "model loaded\n" << std::flush;
    } catch (...) {
      failure = std::current_exception();
      // The server may not be accepting yet; keep asking until it returns.
      while (!done) {
        svc.stop();
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    }
  });
  const bool ok = svc.listen(a.host, a.port, [&](int port) {
    out << "listening on " << a.host << ":" << port << '\n' << std::flush;
  });
  done = true;
  loader.join();
  if (failure) std::rethrow_exception(failure);
  if (!ok) throw FormatError("cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-grained VAE: corpus generation, training, synthesis and evaluation", "mgvae"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-corpus", "Generate the synthetic corpus");
  c_gen->add_option("--out", gen.out_dir, "Output directory")->required();
  c_gen->add_option("--config", gen.config_path, "Generator config (JSON)");
  c_gen->add_option("--seed", gen.seed, "Random seed");
  c_gen->add_option("--per-style", gen.per_style, "Utterances per style");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train step 1, step 2 and/or the baseline priors");
  c_train->add_option("--corpus", tr.corpus, "Corpus manifest")->required();
  c_train->add_option("--model-dir", tr.model_dir, "Checkpoint directory")->required();
  c_train->add_option("--steps", tr.steps, "Comma list of 1, 2, baselines")->capture_default_str();
  c_train->add_option("--config", tr.config_path, "Training config (JSON)");
  c_train->add_option("--model-config", tr.model_config_path, "Model config (JSON)");
  c_train->add_option("--seed", tr.seed, "Random seed");
  c_train->add_option("--lr", tr.lr, "Learning rate");
  c_train->add_option("--batch", tr.batch, "Batch size (utterances)");
  c_train->add_option("--epochs1", tr.epochs1, "Step-1 epochs");
  c_train->add_option("--epochs2", tr.epochs2, "Step-2 epochs");
  c_train->add_option("--baseline-epochs", tr.baseline_epochs, "Baseline epochs");
  c_train->add_option("--patience", tr.patience, "Step-1 early stopping patience (0: off)");
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints");
  c_train->add_option("--p-min", tr.p_min, "Scheduled sampling floor");
  c_train->add_option("--decay-epochs", tr.decay_epochs, "Scheduled sampling decay epochs");
  c_train->add_option("--precision", tr.precision, "f64 or f32");
  c_train->add_option("--latent-dim", tr.latent_dim, "Latent dimension");
  c_train->add_option("--kl-weight", tr.kl_weight, "KL weight, one value or utterance,phrase,word");
  c_train->add_flag("--no-residual", tr.no_residual, "Disable residual encoders/converters");
  c_train->add_flag("--no-dec-sharing", tr.no_dec_sharing, "One decoder per level");

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Synthesize features for one utterance");
  c_synth->add_option("--model-dir", sy.model_dir, "Checkpoint directory")->required();
  c_synth->add_option("--corpus", sy.corpus, "Corpus manifest (for --utterance)");
  c_synth->add_option("--utterance", sy.utterance, "Utterance id");
  c_synth->add_option("--text", sy.text, "symbols;frames;phrase_words, e.g. 3,1,4;10,12,9;2,1");
  c_synth->add_option("--mode", sy.mode, "FG, FG+AR, FG+CP, FG+CP+AR, MG+CP, MG+CP+AR")->capture_default_str();
  c_synth->add_option("--z-u", sy.z_u, "Utterance latent override, comma separated");
  c_synth->add_option("--temperature", sy.temperature, "Noise scale")->capture_default_str();
  c_synth->add_option("--seed", sy.seed, "Noise seed")->capture_default_str();
  c_synth->add_option("--out", sy.out_path, "Output JSON");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Objective evaluation over a split");
  c_eval->add_option("--model-dir", ev.model_dir, "Checkpoint directory")->required();
  c_eval->add_option("--corpus", ev.corpus, "Corpus manifest")->required();
  c_eval->add_option("--split", ev.split, "train, valid or test")->capture_default_str();
  c_eval->add_option("--modes", ev.modes, "all, or a comma list of systems")->capture_default_str();
  c_eval->add_option("--temperature", ev.temperature, "Noise scale")->capture_default_str();
  c_eval->add_option("--seed", ev.seed, "Noise seed")->capture_default_str();
  c_eval->add_option("--limit", ev.limit, "Evaluate only the first N utterances");
  c_eval->add_option("--out", ev.out_path, "Report JSON");

  ExportArgs ex;
  auto* c_export = app.add_subcommand("export-latents", "Write posterior-mean latents with style labels");
  c_export->add_option("--model-dir", ex.model_dir, "Checkpoint directory")->required();
  c_export->add_option("--corpus", ex.corpus, "Corpus manifest")->required();
  c_export->add_option("--split", ex.split, "all, train, valid or test")->capture_default_str();
  c_export->add_option("--levels", ex.levels, "utterance or all")->capture_default_str();
  c_export->add_option("--out", ex.out_path, "Output JSON lines (default stdout)");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Start the HTTP service for the latent explorer");
  c_serve->add_option("--port", sv.port, "Port (0 picks a free one)")->capture_default_str();
  c_serve->add_option("--host", sv.host, "Bind address")->capture_default_str();
  c_serve->add_option("--checkpoint", sv.model_dir, "Checkpoint directory")->required();
  c_serve->add_option("--corpus", sv.corpus, "Corpus manifest")->required();
  c_serve->add_option("--max-points", sv.max_points, "Latent map points per style")->capture_default_str();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_gen->parsed()) return gen_corpus(gen, out);
    if (c_train->parsed()) return train(tr, out);
    if (c_synth->parsed()) return synth(sy, out);
    if (c_eval->parsed()) return eval(ev, out);
    if (c_export->parsed()) return export_latents(ex, out);
    if (c_serve->parsed()) return serve(sv, out);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace mgvae::cli
