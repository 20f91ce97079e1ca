#include "cvrank/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvrank/binary_io.hpp"
#include "cvrank/checkpoint.hpp"
#include "cvrank/cvlang.hpp"
#include "cvrank/digest.hpp"
#include "cvrank/embed.hpp"
#include "cvrank/error.hpp"
#include "cvrank/evaluator.hpp"
#include "cvrank/geostore.hpp"
#include "cvrank/jsonl.hpp"
#include "cvrank/reranker.hpp"
#include "cvrank/retriever.hpp"
#include "cvrank/synth.hpp"
#include "cvrank/trainer.hpp"

namespace cvrank::cli {

namespace fs = std::filesystem;

namespace {

struct KeySpec {
  const char* name;
  const char* def;
  const char* help;
};

// The full configuration schema. Config files may set any of these; each
// subcommand exposes the subset it uses as --flags.
const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"out", "out", "output directory"},
      {"store", "", "store directory"},
      {"rankings", "", "rankings JSONL"},
      {"baseline", "", "baseline rankings JSONL"},
      {"reranked", "", "reranked rankings JSONL"},
      {"samples", "", "training samples JSONL"},
      {"checkpoint", "", "reranker checkpoint (.gvck)"},
      {"query_ids", "", "file with one query id per line restricting the evaluated queries"},
      {"bank", "", "question bank JSON (default: built-in)"},
      {"sheets", "", "answer sheets JSONL"},
      {"descriptions", "", "descriptions JSONL"},
      {"descriptions_a", "", "first descriptions JSONL"},
      {"descriptions_b", "", "second descriptions JSONL"},
      {"manifest", "", "manifest file (key=value)"},
      {"ref_embeddings", "", "reference embeddings JSONL"},
      {"ref_captions", "", "reference captions JSONL"},
      {"ref_coords", "", "reference coordinates JSONL"},
      {"query_embeddings", "", "query embeddings JSONL"},
      {"query_captions", "", "query captions JSONL"},
      {"query_coords", "", "query coordinates JSONL"},
      {"k", "10", "retrieval depth"},
      {"threads", "0", "worker threads (0 = hardware concurrency)"},
      {"accumulation", "f64", "dot-product accumulator: f64 or f32"},
      {"instances", "false", "one ranking per single-positive evaluation instance"},
      {"seed", "0", "random seed"},
      {"synth_locations", "1000", "synthetic locations"},
      {"synth_group_size", "4", "locations per confusion group"},
      {"synth_image_dim", "64", "synthetic image embedding dim"},
      {"synth_text_dim", "64", "synthetic text embedding dim"},
      {"synth_group_spread", "1.0", "norm of group image centroids"},
      {"synth_location_spread", "0.0", "norm of per-location image offsets"},
      {"synth_sigma_img", "0.3", "image noise norm"},
      {"synth_text_margin", "1.0", "norm of location text centroids"},
      {"synth_sigma_txt", "0.3", "text noise norm"},
      {"synth_semi_positives", "0", "semi-positive references per location"},
      {"latent_dim", "512", "reranker latent width"},
      {"aligner_layers", "2", "aligner blocks"},
      {"aligner_hidden", "512", "aligner hidden width"},
      {"ln_epsilon", "1e-5", "LayerNorm epsilon"},
      {"shared_projections", "true", "share projections between query and reference sides"},
      {"init_seed", "0", "parameter initialization seed"},
      {"margin", "1.0", "ranking margin"},
      {"optimizer", "adam", "adam or sgd"},
      {"lr", "1e-4", "learning rate"},
      {"adam_beta1", "0.9", "Adam beta1"},
      {"adam_beta2", "0.999", "Adam beta2"},
      {"adam_eps", "1e-8", "Adam epsilon"},
      {"batch_size", "16", "samples per step"},
      {"epochs", "10", "training epochs"},
      {"shuffle_seed", "0", "batch order and validation split seed"},
      {"grad_clip", "", "global gradient norm clip (empty: off)"},
      {"loss_on", "scores", "hinge on scores or logits"},
      {"val_split", "0.2", "fraction of queries held out"},
      {"semi_positives", "negative", "semi-positive regime: negative or excluded"},
      {"ks", "1,5,10", "recall depths"},
      {"thresholds", "0.0,0.5", "positional thresholds in km"},
      {"earth_radius_km", "6371.0", "sphere radius for distances"},
      {"embed_url", "mock:", "embedding endpoint URL or mock:"},
      {"embed_model", "text-embedding-3-small", "embedding model name"},
      {"embed_dim", "1536", "text embedding dim"},
      {"embed_batch", "64", "texts per request"},
      {"embed_attempts", "4", "attempts per request"},
      {"embed_backoff_ms", "250", "initial retry backoff"},
      {"embed_timeout", "30", "request timeout in seconds"},
  };
  return specs;
}

std::string flag_name(std::string key) {
  for (auto& c : key) {
    if (c == '_') c = '-';
  }
  return "--" + key;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Resolved key=value view: flag > config file > default.
class Settings {
 public:
  explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  const std::string& str(const std::string& key) const { return values_.at(key); }

  std::string path(const std::string& key) const {
    const auto& v = str(key);
    if (v.empty()) throw ValidationError("missing required setting '" + key + "' (" + flag_name(key) + ")");
    return v;
  }

  double real(const std::string& key) const {
    const auto& v = str(key);
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw ValidationError("setting '" + key + "': not a number: '" + v + "'");
    return out;
  }

  std::uint64_t count(const std::string& key) const {
    const auto& v = str(key);
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end || v.empty()) {
      throw ValidationError("setting '" + key + "': not a non-negative integer: '" + v + "'");
    }
    return out;
  }

  std::uint32_t dim(const std::string& key) const {
    const auto v = count(key);
    if (v > 0xffffffffULL) throw ValidationError("setting '" + key + "' too large");
    return static_cast<std::uint32_t>(v);
  }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("setting '" + key + "': expected true/false, got '" + v + "'");
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> allowed) const {
    const auto& v = str(key);
    for (const char* a : allowed) {
      if (v == a) return v;
    }
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw ValidationError("setting '" + key + "': '" + v + "' is not one of {" + list + "}");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split(key)) out.push_back(Settings(std::map<std::string, std::string>{{key, item}}).count(key));
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(key)) out.push_back(Settings(std::map<std::string, std::string>{{key, item}}).real(key));
    return out;
  }

 private:
  std::vector<std::string> split(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) throw ValidationError("setting '" + key + "': empty list item");
      out.push_back(item);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Builders from settings

retriever::Accumulation accumulation(const Settings& s) {
  return s.choice("accumulation", {"f64", "f32"}) == "f64" ? retriever::Accumulation::kFloat64
                                                            : retriever::Accumulation::kFloat32;
}

reranker::RerankerConfig model_config(const Settings& s, const geostore::Store& store) {
  reranker::RerankerConfig c;
  c.image_dim = store.image_dim();
  c.text_dim = store.text_dim();
  c.latent_dim = s.dim("latent_dim");
  c.aligner_layers = s.dim("aligner_layers");
  c.aligner_hidden = s.dim("aligner_hidden");
  c.ln_epsilon = s.real("ln_epsilon");
  c.shared_projections = s.flag("shared_projections");
  c.init_seed = s.count("init_seed");
  c.validate();
  return c;
}

trainer::LossOn loss_on(const Settings& s) {
  return s.choice("loss_on", {"scores", "logits"}) == "scores" ? trainer::LossOn::kScores : trainer::LossOn::kLogits;
}

trainer::TrainConfig train_config(const Settings& s) {
  trainer::TrainConfig c;
  c.margin = s.real("margin");
  c.optimizer = s.choice("optimizer", {"adam", "sgd"}) == "adam" ? trainer::OptimizerKind::kAdam
                                                                 : trainer::OptimizerKind::kSgd;
  c.lr = s.real("lr");
  c.adam_beta1 = s.real("adam_beta1");
  c.adam_beta2 = s.real("adam_beta2");
  c.adam_eps = s.real("adam_eps");
  c.batch_size = s.count("batch_size");
  c.epochs = s.count("epochs");
  c.shuffle_seed = s.count("shuffle_seed");
  if (!s.str("grad_clip").empty()) c.grad_clip = s.real("grad_clip");
  c.loss_on = loss_on(s);
  c.val_split = s.real("val_split");
  c.validate();
  return c;
}

evaluator::EvalConfig eval_config(const Settings& s) {
  evaluator::EvalConfig c;
  c.ks = s.counts("ks");
  c.thresholds_km = s.str("thresholds").empty() ? std::vector<double>{} : s.reals("thresholds");
  c.earth_radius_km = s.real("earth_radius_km");
  c.validate();
  return c;
}

embed::EndpointConfig endpoint(const Settings& s) {
  embed::EndpointConfig e;
  e.url = s.str("embed_url");
  e.model = s.str("embed_model");
  e.dim = s.dim("embed_dim");
  e.batch_size = s.count("embed_batch");
  e.max_attempts = static_cast<int>(s.count("embed_attempts"));
  e.backoff_ms = static_cast<int>(s.count("embed_backoff_ms"));
  e.timeout_seconds = static_cast<int>(s.count("embed_timeout"));
  return e;
}

geostore::SynthConfig synth_config(const Settings& s) {
  geostore::SynthConfig c;
  c.n_locations = s.count("synth_locations");
  c.group_size = s.count("synth_group_size");
  c.image_dim = s.dim("synth_image_dim");
  c.text_dim = s.dim("synth_text_dim");
  c.group_spread = s.real("synth_group_spread");
  c.location_spread = s.real("synth_location_spread");
  c.sigma_img = s.real("synth_sigma_img");
  c.text_margin = s.real("synth_text_margin");
  c.sigma_txt = s.real("synth_sigma_txt");
  c.semi_positives_per_location = s.count("synth_semi_positives");
  return c;
}

std::string out_file(const Settings& s, const std::string& name) { return (fs::path(s.str("out")) / name).string(); }

std::vector<retriever::Ranking> restrict_to(std::vector<retriever::Ranking> rankings, const Settings& s) {
  if (s.str("query_ids").empty()) return rankings;
  const auto ids = geostore::read_id_file(s.str("query_ids"));
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::erase_if(rankings, [&](const retriever::Ranking& r) { return !keep.contains(r.query_id); });
  return rankings;
}

// ---------------------------------------------------------------------------
// Subcommands

using Handler = int (*)(const Settings&, std::ostream&);

int cmd_ingest(const Settings& s, std::ostream& out) {
  geostore::IngestSources src;
  src.references = {s.path("ref_embeddings"), s.str("ref_captions"), s.str("ref_coords")};
  src.queries = {s.path("query_embeddings"), s.str("query_captions"), s.str("query_coords")};
  const auto manifest = geostore::read_manifest(s.path("manifest"));
  const auto store = geostore::ingest_to(src, manifest, s.str("out"));
  out << "ingested " << store.references().size() << " references, " << store.queries().size() << " queries into "
      << s.str("out") << "\n";
  out << "digest " << directory_digest(s.str("out")) << "\n";
  return kExitOk;
}

int cmd_synth(const Settings& s, std::ostream& out) {
  const auto data = geostore::generate_synthetic(synth_config(s), s.count("seed"));
  geostore::save_store(data.store, s.str("out"));
  out << "synthetic store: " << data.store.references().size() << " references, " << data.store.queries().size()
      << " queries in " << s.str("out") << "\n";
  out << "digest " << directory_digest(s.str("out")) << "\n";
  return kExitOk;
}

int cmd_retrieve(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto k = s.count("k");
  if (k == 0) throw ValidationError("k must be >= 1");
  const auto rankings = s.flag("instances") ? retriever::retrieve_instances(store, k, accumulation(s))
                                            : retriever::retrieve_all(store, k, s.count("threads"), accumulation(s));
  const auto path = out_file(s, "rankings.jsonl");
  retriever::write_rankings(path, rankings);
  out << "wrote " << rankings.size() << " rankings (k=" << k << ") to " << path << "\n";
  return kExitOk;
}

int cmd_caption(const Settings& s, std::ostream& out) {
  const auto bank = s.str("bank").empty() ? cvlang::QuestionBank::builtin() : cvlang::QuestionBank::load(s.str("bank"));
  const auto sheets = cvlang::read_sheets(s.path("sheets"));
  std::vector<cvlang::Description> descriptions;
  std::string problems;
  for (const auto& sheet : sheets) {
    const auto violations = cvlang::validate_sheet(sheet, bank);
    for (const auto& v : violations) problems += sheet.image_id + ": " + v.message + "\n";
    if (violations.empty()) descriptions.push_back({sheet.image_id, cvlang::render_description(sheet, bank)});
  }
  if (!problems.empty()) throw ValidationError("invalid answer sheets:\n" + problems);
  const auto path = out_file(s, "descriptions.jsonl");
  cvlang::write_descriptions(path, descriptions);
  out << "rendered " << descriptions.size() << " descriptions to " << path << "\n";
  return kExitOk;
}

int cmd_embed(const Settings& s, std::ostream& out) {
  const auto descriptions = cvlang::read_descriptions(s.path("descriptions"));
  std::vector<std::string> texts;
  for (const auto& d : descriptions) texts.push_back(d.text);
  const auto ep = endpoint(s);
  const auto vectors = embed::embed_texts(texts, ep);
  std::vector<jsonl::ordered_json> rows;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    rows.push_back(jsonl::ordered_json{{"image_id", descriptions[i].image_id}, {"embedding", vectors[i]}});
  }
  const auto path = out_file(s, "text_embeddings.jsonl");
  jsonl::write(path, rows);
  out << "embedded " << rows.size() << " descriptions (dim " << ep.dim << (embed::is_mock(ep) ? ", mock" : "")
      << ") to " << path << "\n";
  if (!s.str("store").empty()) {
    auto store = geostore::load_store(s.str("store"));
    std::size_t attached = 0;
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
      const auto& id = descriptions[i].image_id;
      if (store.find_reference(id)) {
        store.set_text(geostore::Side::kReference, id, descriptions[i].text, vectors[i]);
      } else if (store.find_query(id)) {
        store.set_text(geostore::Side::kQuery, id, descriptions[i].text, vectors[i]);
      } else {
        throw ValidationError("description for unknown id '" + id + "'");
      }
      ++attached;
    }
    const auto dir = out_file(s, "store");
    geostore::save_store(store, dir);
    out << "attached " << attached << " captions; updated store in " << dir << "\n";
  }
  return kExitOk;
}

int cmd_build_samples(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto rankings = retriever::read_rankings(s.path("rankings"));
  const auto regime = s.choice("semi_positives", {"negative", "excluded"}) == "negative"
                          ? trainer::SemiPositiveRegime::kNegative
                          : trainer::SemiPositiveRegime::kExcluded;
  const auto set = trainer::build_training_samples(store, rankings, regime);
  const auto path = out_file(s, "samples.jsonl");
  trainer::write_samples(path, set.samples);
  out << "wrote " << set.samples.size() << " samples to " << path << " (" << set.skipped
      << " skipped: positive not retrieved)\n";
  return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto samples = trainer::read_samples(s.path("samples"));
  auto tc = train_config(s);
  tc.checkpoint_dir = out_file(s, "checkpoints");
  const auto result = trainer::train(samples, store, model_config(s, store), tc);
  for (const auto& e : result.report.epochs) {
    out << "epoch " << e.epoch << " loss " << std::setprecision(6) << e.mean_loss;
    if (e.val_r1) out << " val_R@1 " << *e.val_r1 << " val_R@5 " << *e.val_r5;
    out << "\n";
  }
  const auto model = out_file(s, "model.gvck");
  reranker::write_checkpoint(model, result.params);
  trainer::write_train_report(out_file(s, "train_log.jsonl"), out_file(s, "train_log.csv"), result.report);
  geostore::write_id_file(out_file(s, "validation_ids.txt"), result.report.validation_query_ids);
  out << "trained on " << result.report.train_samples << " samples (" << result.report.val_samples
      << " held out); model written to " << model << "\n";
  return kExitOk;
}

int cmd_rerank(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto rankings = restrict_to(retriever::read_rankings(s.path("rankings")), s);
  const auto ckpt = reranker::read_checkpoint(s.path("checkpoint"));
  const auto reranked = reranker::rerank_all(rankings, ckpt.params, store);
  const auto path = out_file(s, "reranked.jsonl");
  retriever::write_rankings(path, reranked);
  out << "reranked " << reranked.size() << " rankings to " << path << "\n";
  return kExitOk;
}

void print_metrics(std::ostream& out, const evaluator::EvalReport& rep) {
  out << evaluator::report_csv(rep);
}

int cmd_eval(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto rankings = restrict_to(retriever::read_rankings(s.path("rankings")), s);
  const auto coords = evaluator::reference_coords(store);
  const auto rep = evaluator::evaluate_report(rankings, evaluator::ground_truth_of(store), &coords, eval_config(s));
  evaluator::write_report(s.str("out"), rep);
  print_metrics(out, rep);
  return kExitOk;
}

int cmd_compare(const Settings& s, std::ostream& out) {
  const auto store = geostore::load_store(s.path("store"));
  const auto baseline = restrict_to(retriever::read_rankings(s.path("baseline")), s);
  const auto reranked = restrict_to(retriever::read_rankings(s.path("reranked")), s);
  const auto coords = evaluator::reference_coords(store);
  const auto rep =
      evaluator::compare_rankings(baseline, reranked, evaluator::ground_truth_of(store), &coords, eval_config(s));
  evaluator::write_report(s.str("out"), rep);
  print_metrics(out, rep);
  return kExitOk;
}

int cmd_stability(const Settings& s, std::ostream& out) {
  const auto a = cvlang::read_descriptions(s.path("descriptions_a"));
  const auto b = cvlang::read_descriptions(s.path("descriptions_b"));
  auto texts = [](const std::vector<cvlang::Description>& d) {
    std::vector<std::string> t;
    for (const auto& x : d) t.push_back(x.text);
    return t;
  };
  const auto ep = endpoint(s);
  const auto rep = cvlang::stability_report(a, b, embed::embed_texts(texts(a), ep), embed::embed_texts(texts(b), ep));
  const nlohmann::ordered_json doc{{"pairs", rep.pairs},
                                   {"mean_cosine", rep.mean_cosine},
                                   {"mean_jaccard", rep.mean_jaccard},
                                   {"mean_length_words", rep.mean_length},
                                   {"length_stddev_words", rep.length_stddev}};
  const auto path = out_file(s, "stability.json");
  io::write_file(path, doc.dump(2) + "\n");
  out << doc.dump(2) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const Settings& s, std::ostream& out) {
  constexpr double kTolerance = 1e-4;
  auto options = trainer::default_gradcheck_options(s.count("seed"));
  options.loss_on = loss_on(s);
  const auto result = trainer::gradient_check(s.count("seed"), options);
  for (const auto& t : result.tensors) {
    out << std::left << std::setw(28) << t.name << " rel_err " << std::scientific << std::setprecision(3)
        << t.relative_error << "\n";
  }
  out << "max relative error " << std::scientific << std::setprecision(3) << result.max_relative_error << "\n";
  out << std::defaultfloat;
  return result.max_relative_error <= kTolerance ? kExitOk : kExitValidation;
}

struct Command {
  const char* name;
  const char* help;
  Handler handler;
  std::vector<const char*> keys;
};

const std::vector<Command>& commands() {
  static const std::vector<Command> cmds = {
      {"ingest", "Ingest embedding, caption and coordinate files into a store directory", cmd_ingest,
       {"out", "manifest", "ref_embeddings", "ref_captions", "ref_coords", "query_embeddings", "query_captions",
        "query_coords"}},
      {"synth", "Generate a synthetic confusion-group store", cmd_synth,
       {"out", "seed", "synth_locations", "synth_group_size", "synth_image_dim", "synth_text_dim",
        "synth_group_spread", "synth_location_spread", "synth_sigma_img", "synth_text_margin", "synth_sigma_txt",
        "synth_semi_positives"}},
      {"retrieve", "Rank references for every query by cosine similarity", cmd_retrieve,
       {"out", "store", "k", "threads", "accumulation", "instances"}},
      {"caption", "Validate answer sheets and render descriptions", cmd_caption, {"out", "sheets", "bank"}},
      {"embed", "Embed descriptions (live endpoint or mock:)", cmd_embed,
       {"out", "descriptions", "store", "embed_url", "embed_model", "embed_dim", "embed_batch", "embed_attempts",
        "embed_backoff_ms", "embed_timeout"}},
      {"build-samples", "Build training samples from retrieved rankings", cmd_build_samples,
       {"out", "store", "rankings", "semi_positives"}},
      {"train", "Train the reranker", cmd_train,
       {"out", "store", "samples", "latent_dim", "aligner_layers", "aligner_hidden", "ln_epsilon",
        "shared_projections", "init_seed", "margin", "optimizer", "lr", "adam_beta1", "adam_beta2", "adam_eps",
        "batch_size", "epochs", "shuffle_seed", "grad_clip", "loss_on", "val_split"}},
      {"rerank", "Rerank retrieved candidates with a trained checkpoint", cmd_rerank,
       {"out", "store", "rankings", "checkpoint", "query_ids"}},
      {"eval", "Recall, AP and positional-threshold metrics for one ranking set", cmd_eval,
       {"out", "store", "rankings", "query_ids", "ks", "thresholds", "earth_radius_km"}},
      {"compare", "Compare baseline and reranked rankings", cmd_compare,
       {"out", "store", "baseline", "reranked", "query_ids", "ks", "thresholds", "earth_radius_km"}},
      {"stability", "Cosine, Jaccard and length statistics between two description runs", cmd_stability,
       {"out", "descriptions_a", "descriptions_b", "embed_url", "embed_model", "embed_dim", "embed_batch",
        "embed_attempts", "embed_backoff_ms", "embed_timeout"}},
      {"gradcheck", "Compare analytic gradients with central differences", cmd_gradcheck, {"seed", "loss_on"}},
  };
  return cmds;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-view geo-localization retrieval and reranking", "cvrank"};
  app.require_subcommand(1);
  // Lets --config follow the subcommand name.
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (default: $" + std::string(kConfigEnv) + ")");

  struct Bound {
    std::string key;
    CLI::Option* option;
    std::string value;
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  // Stable storage: options hold pointers into these strings.
  std::vector<std::unique_ptr<Bound>> bound;
  for (const auto& cmd : commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    for (const char* key : cmd.keys) {
      const auto spec = std::find_if(key_specs().begin(), key_specs().end(),
                                     [&](const KeySpec& k) { return std::string_view(k.name) == key; });
      auto b = std::make_unique<Bound>();
      b->key = key;
      std::string help = spec->help;
      if (*spec->def) help += " [" + std::string(spec->def) + "]";
      b->option = sub->add_option(flag_name(key), b->value, help);
      bound.push_back(std::move(b));
    }
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitValidation;
  }

  auto values = config_defaults();
  if (config_path.empty()) {
    if (const char* env = std::getenv(kConfigEnv); env && *env) config_path = env;
  }
  if (!config_path.empty()) {
    for (auto& [k, v] : parse_config(io::read_file(config_path), config_path)) values[k] = v;
  }
  for (const auto& b : bound) {
    if (b->option->count() > 0) values[b->key] = b->value;
  }
  const Settings settings(std::move(values));
  for (const auto& [sub, cmd] : subs) {
    if (sub->parsed()) return cmd->handler(settings, out);
  }
  return kExitValidation;
}

}  // namespace

const std::map<std::string, std::string>& config_defaults() {
  static const auto defaults = [] {
    std::map<std::string, std::string> m;
    for (const auto& k : key_specs()) m.emplace(k.name, k.def);
    return m;
  }();
  return defaults;
}

std::map<std::string, std::string> parse_config(std::string_view text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ValidationError(where + "expected key=value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (!config_defaults().contains(key)) throw ValidationError(where + "unknown config key '" + key + "'");
    if (!out.emplace(key, value).second) throw ValidationError(where + "duplicate config key '" + key + "'");
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(argc, argv, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"cvrank"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cvrank::cli
