// Batch front end for the cross-view pipeline:
//   synth/ingest -> train -> embed -> select-prompts -> classify -> evaluate
// plus retrieve and the gradcheck gate. Machine output is JSON and EMB1 only;
// progress goes to standard error. Identical argv and seed give identical
// output bytes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "crossview/error.hpp"
#include "crossview/metrics.hpp"
#include "crossview/model.hpp"
#include "crossview/pooling.hpp"
#include "crossview/selfcheck.hpp"
#include "crossview/store.hpp"
#include "crossview/trainer.hpp"
#include "crossview/zeroshot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crossview;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrKind::io, "cannot open for writing: " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.flush();
  if (!f) fail(ErrKind::io, "write failed: " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrKind::io, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) fail(ErrKind::io, "read failed: " + path.string());
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrKind::format, path.string() + ": invalid JSON: " + e.what());
  }
}

// Flag beats config file beats default; unknown config keys are rejected.
// Every resolved value lands in the run manifest.
class ConfigMerge {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    cfg_ = read_json_file(path);
    if (!cfg_.is_object()) fail(ErrKind::schema, path + ": config must be a JSON object");
  }

  template <typename T>
  void merge(CLI::App* cmd, const std::string& flag, const std::string& key, T& value) {
    known_.insert(key);
    if (cmd->count(flag) == 0 && cfg_.contains(key)) {
      try {
        value = cfg_.at(key).get<T>();
      } catch (const json::exception&) {
        fail(ErrKind::schema, "config key " + key + " has the wrong type");
      }
    }
    resolved_[key] = value;
  }

  void finish() const {
    for (const auto& item : cfg_.items())
      if (known_.find(item.key()) == known_.end())
        fail(ErrKind::schema, "unknown config key: " + item.key());
  }

  const json& resolved() const { return resolved_; }

 private:
  json cfg_ = json::object();
  json resolved_ = json::object();
  std::set<std::string> known_;
};

void write_run_manifest_dir(const fs::path& out_dir, const std::string& command,
                            const json& params) {
  json j;
  j["command"] = command;
  j["parameters"] = params;
  write_json_file(out_dir / "run.json", j);
}

void write_run_manifest_file(const fs::path& out_file, const std::string& command,
                             const json& params) {
  json j;
  j["command"] = command;
  j["parameters"] = params;
  write_json_file(fs::path(out_file.string() + ".run.json"), j);
}

fs::path dataset_manifest(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) return p / "dataset.json";
  return p;
}

fs::path checkpoint_dir(const std::string& ckpt) {
  fs::path p(ckpt);
  if (p.filename() == "checkpoint.json" && fs::is_regular_file(p)) return p.parent_path();
  return p;
}

struct PredFile {
  std::vector<std::string> classes;
  std::vector<std::size_t> labels;
  numcore::Mat scores;
};

PredFile load_predictions(const fs::path& path) {
  const json j = read_json_file(path);
  if (!j.is_object() || !j.contains("classes") || !j.contains("items"))
    fail(ErrKind::schema, path.string() + ": missing classes or items");
  PredFile out;
  for (const auto& c : j.at("classes")) {
    if (!c.is_string()) fail(ErrKind::schema, "class names must be strings");
    out.classes.push_back(c.get<std::string>());
  }
  const auto& items = j.at("items");
  if (!items.is_array() || items.empty())
    fail(ErrKind::schema, path.string() + ": items must be a nonempty array");
  const std::size_t c_count = out.classes.size();
  out.scores = numcore::Mat(items.size(), c_count);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (!it.is_object() || !it.contains("label_index") || !it.contains("scores"))
      fail(ErrKind::schema, "prediction item " + std::to_string(i) + " is malformed");
    const auto li = it.at("label_index");
    if (!li.is_number_integer() || li.get<std::int64_t>() < 0 ||
        li.get<std::uint64_t>() >= c_count)
      fail(ErrKind::schema, "prediction item " + std::to_string(i) + ": bad label_index");
    out.labels.push_back(li.get<std::size_t>());
    const auto& sc = it.at("scores");
    if (!sc.is_array() || sc.size() != c_count)
      fail(ErrKind::schema, "prediction item " + std::to_string(i) + ": bad scores length");
    for (std::size_t c = 0; c < c_count; ++c) {
      if (!sc[c].is_number())
        fail(ErrKind::schema, "prediction item " + std::to_string(i) + ": bad score value");
      out.scores.at(i, c) = sc[c].get<double>();
    }
  }
  return out;
}

// ---- subcommand payloads ----

struct IngestArgs {
  std::string data, out, config;
  std::string prompts;
  std::uint64_t seed = 0;
};

int run_ingest(CLI::App* cmd, IngestArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--data", "data", a.data);
  m.merge(cmd, "--prompts", "prompts", a.prompts);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const fs::path out(a.out);
  fs::create_directories(out);
  store::QuadrupletDataset ds = store::load_dataset(dataset_manifest(a.data));
  store::save_dataset(ds, out / "dataset.json");
  std::cerr << "ingested " << ds.size() << " locations\n";
  if (!a.prompts.empty()) {
    store::PromptSet ps = store::load_prompt_set(a.prompts);
    const std::string stem = fs::path(a.prompts).stem().string();
    ps.matrix_ref = stem + ".emb1";
    store::save_prompt_set(ps, out / (stem + ".json"));
    std::cerr << "ingested prompt set with " << ps.C() << " classes\n";
  }
  write_run_manifest_dir(out, "ingest", m.resolved());
  return 0;
}

struct SynthArgs {
  std::size_t classes = 10, per_class = 50, dim = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out, config;
};

int run_synth(CLI::App* cmd, SynthArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--classes", "classes", a.classes);
  m.merge(cmd, "--per-class", "per_class", a.per_class);
  m.merge(cmd, "--dim", "dim", a.dim);
  m.merge(cmd, "--noise", "noise", a.noise);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const store::SynthResult r =
      store::synth_dataset(a.classes, a.per_class, a.dim, a.noise, a.seed);
  const fs::path out(a.out);
  fs::create_directories(out);
  store::save_dataset(r.dataset, out / "dataset.json");
  store::save_prompt_set(r.clean_prompts, out / "prompts_clean.json");
  store::save_prompt_set(r.corrupted_prompts, out / "prompts_corrupted.json");
  write_run_manifest_dir(out, "synth", m.resolved());
  std::cerr << "wrote synthetic dataset: " << r.dataset.size() << " locations, dim "
            << a.dim << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, out, config;
  trainer::TrainConfig cfg;
  std::string pool = "att", loss_form = "moco";
};

int run_train(CLI::App* cmd, TrainArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--data", "data", a.data);
  m.merge(cmd, "--epochs", "epochs", a.cfg.epochs);
  m.merge(cmd, "--batch-size", "batch_size", a.cfg.batch_size);
  m.merge(cmd, "--lr0", "lr0", a.cfg.lr0);
  m.merge(cmd, "--tau", "tau", a.cfg.tau);
  m.merge(cmd, "--lr-step", "lr_step", a.cfg.lr_step);
  m.merge(cmd, "--lr-gamma", "lr_gamma", a.cfg.lr_gamma);
  m.merge(cmd, "--queue-capacity", "queue_capacity", a.cfg.queue_capacity);
  m.merge(cmd, "--weight-decay", "weight_decay", a.cfg.weight_decay);
  m.merge(cmd, "--dropout-rate", "dropout_rate", a.cfg.dropout_rate);
  m.merge(cmd, "--pool", "pool", a.pool);
  m.merge(cmd, "--loss-form", "loss_form", a.loss_form);
  m.merge(cmd, "--seed", "seed", a.cfg.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();
  a.cfg.pool = pooling::pool_mode_from_string(a.pool);
  a.cfg.loss_form = trainer::loss_form_from_string(a.loss_form);

  const store::QuadrupletDataset ds = store::load_dataset(dataset_manifest(a.data));
  const fs::path out(a.out);
  fs::create_directories(out);

  const auto on_epoch = [&](const store::ModelCheckpoint& ck,
                            const std::vector<trainer::LossRecord>& losses) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu", ck.epoch);
    store::save_checkpoint(ck, out / name);
    trainer::save_loss_log(losses, out / "loss_log.jsonl");
    double mean = 0.0;
    std::size_t n = 0;
    for (const auto& r : losses)
      if (r.epoch == ck.epoch - 1) {
        mean += r.loss;
        ++n;
      }
    std::cerr << "epoch " << ck.epoch << ": mean loss "
              << (n ? mean / static_cast<double>(n) : 0.0) << "\n";
  };

  const trainer::TrainResult result = trainer::train(ds, a.cfg, on_epoch);
  store::save_checkpoint(result.checkpoint, out);
  trainer::save_loss_log(result.losses, out / "loss_log.jsonl");
  write_run_manifest_dir(out, "train", m.resolved());
  return 0;
}

struct EmbedArgs {
  std::string ckpt, data, out, config;
  std::uint64_t seed = 0;
};

int run_embed(CLI::App* cmd, EmbedArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--ckpt", "ckpt", a.ckpt);
  m.merge(cmd, "--data", "data", a.data);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const store::ModelCheckpoint ck = store::load_checkpoint(checkpoint_dir(a.ckpt));
  const store::QuadrupletDataset ds = store::load_dataset(dataset_manifest(a.data));
  const fs::path out(a.out);
  fs::create_directories(out);

  const numcore::Mat sat_emb =
      align::sen_embed_all(ck.params, ds.sat, align::Mode::eval, a.seed);
  store::save_matrix(sat_emb, out / "sat_embeddings.emb1");

  const pooling::AttentionScorer* scorer =
      ck.cfg.pool == pooling::PoolMode::att ? &ck.params.scorer : nullptr;
  const numcore::Mat pooled = pooling::pool_dataset(ds, ck.cfg.pool, scorer);
  store::save_matrix(pooled, out / "ground_pooled.emb1");

  write_run_manifest_dir(out, "embed", m.resolved());
  std::cerr << "embedded " << sat_emb.rows << " satellite rows and pooled "
            << pooled.rows << " ground quadruplets\n";
  return 0;
}

struct SelectArgs {
  std::string prompts, mode = "best", out, report, config;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

int run_select(CLI::App* cmd, SelectArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--prompts", "prompts", a.prompts);
  m.merge(cmd, "-k", "k", a.k);
  m.merge(cmd, "--mode", "mode", a.mode);
  m.merge(cmd, "--report", "report", a.report);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const store::PromptSet ps = store::load_prompt_set(a.prompts);
  const zeroshot::SelectMode mode = zeroshot::select_mode_from_string(a.mode);
  store::PromptSet picked = zeroshot::select_prompts(ps, a.k, mode, a.seed);
  picked.matrix_ref.clear();  // name the matrix after the output file
  store::save_prompt_set(picked, a.out);
  write_run_manifest_file(a.out, "select-prompts", m.resolved());

  if (!a.report.empty()) {
    const zeroshot::PromptScoreReport rep = zeroshot::prompt_scores(ps);
    json j;
    json classes = json::array();
    for (std::size_t c = 0; c < ps.C(); ++c) {
      json e;
      e["name"] = ps.classes[c].name;
      e["alpha"] = std::vector<double>(rep.alpha.row(c), rep.alpha.row(c) + rep.alpha.cols);
      e["beta"] = std::vector<double>(rep.beta.row(c), rep.beta.row(c) + rep.beta.cols);
      e["w"] = std::vector<double>(rep.w.row(c), rep.w.row(c) + rep.w.cols);
      e["ranking"] = rep.ranking[c];
      classes.push_back(std::move(e));
    }
    j["classes"] = std::move(classes);
    write_json_file(a.report, j);
  }
  std::cerr << "selected " << a.k << " prompts per class (" << a.mode << ")\n";
  return 0;
}

struct ClassifyArgs {
  std::string emb, prompts, link = "shifted", prior_data, out, config;
  double link_eps = 1e-6, link_tau = 0.07;
  std::uint64_t seed = 0;
};

int run_classify(CLI::App* cmd, ClassifyArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--emb", "emb", a.emb);
  m.merge(cmd, "--prompts", "prompts", a.prompts);
  m.merge(cmd, "--link", "link", a.link);
  m.merge(cmd, "--link-eps", "link_eps", a.link_eps);
  m.merge(cmd, "--link-tau", "link_tau", a.link_tau);
  m.merge(cmd, "--prior-data", "prior_data", a.prior_data);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  zeroshot::LinkFunction link = zeroshot::link_from_string(a.link);
  link.eps = a.link_eps;
  link.tau_link = a.link_tau;
  const numcore::Mat emb = store::load_matrix(a.emb);
  const store::PromptSet ps = store::load_prompt_set(a.prompts);

  numcore::Mat prior_ref;
  const numcore::Mat* prior_ptr = nullptr;
  if (!a.prior_data.empty()) {
    prior_ref = store::load_matrix(a.prior_data);
    prior_ptr = &prior_ref;
  }
  const zeroshot::ClassifyResult res = zeroshot::classify(emb, ps, link, prior_ptr);

  json j;
  json names = json::array();
  for (const auto& c : ps.classes) names.push_back(c.name);
  j["classes"] = std::move(names);
  j["link"] = link.name();
  j["prior_source"] = res.priors.source;
  json items = json::array();
  for (std::size_t i = 0; i < emb.rows; ++i) {
    json it;
    it["index"] = i;
    it["label_index"] = res.labels[i];
    it["label"] = ps.classes[res.labels[i]].name;
    it["scores"] =
        std::vector<double>(res.scores.row(i), res.scores.row(i) + res.scores.cols);
    items.push_back(std::move(it));
  }
  j["items"] = std::move(items);
  write_json_file(a.out, j);
  write_run_manifest_file(a.out, "classify", m.resolved());
  std::cerr << "classified " << emb.rows << " embeddings into " << ps.C() << " classes\n";
  return 0;
}

struct EvaluateArgs {
  std::string pred, data, metric = "top1", out, config;
  std::uint64_t seed = 0;
};

int run_evaluate(CLI::App* cmd, EvaluateArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--pred", "pred", a.pred);
  m.merge(cmd, "--data", "data", a.data);
  m.merge(cmd, "--metric", "metric", a.metric);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const PredFile pf = load_predictions(a.pred);
  const store::QuadrupletDataset ds = store::load_dataset(dataset_manifest(a.data));
  if (pf.labels.size() != ds.size())
    fail(ErrKind::parameter, "prediction count " + std::to_string(pf.labels.size()) +
                                 " does not match dataset size " +
                                 std::to_string(ds.size()));

  json j;
  j["metric"] = a.metric;
  if (a.metric == "top1") {
    std::vector<std::size_t> gold(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.locations[i].labels.empty())
        fail(ErrKind::parameter, ds.locations[i].id + " has no label");
      gold[i] = ds.locations[i].labels[0];
    }
    j["value"] = evaluation::top1_accuracy(pf.labels, gold);
    j["count"] = ds.size();
  } else if (a.metric == "map") {
    std::vector<std::vector<std::uint32_t>> gold(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) gold[i] = ds.locations[i].labels;
    const evaluation::MapResult r = evaluation::mean_average_precision(pf.scores, gold);
    j["value"] = r.map;
    j["per_class_ap"] = r.per_class_ap;
    j["evaluated"] = r.evaluated;
    j["skipped"] = r.skipped;
  } else {
    fail(ErrKind::parameter, "unknown metric: " + a.metric);
  }
  write_json_file(a.out, j);
  write_run_manifest_file(a.out, "evaluate", m.resolved());
  std::cerr << a.metric << " = " << j.at("value").get<double>() << "\n";
  return 0;
}

struct RetrieveArgs {
  std::string query, gallery, data, out, config;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

int run_retrieve(CLI::App* cmd, RetrieveArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--query", "query", a.query);
  m.merge(cmd, "--gallery", "gallery", a.gallery);
  m.merge(cmd, "-k", "k", a.k);
  m.merge(cmd, "--data", "data", a.data);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  const numcore::Mat queries = store::load_matrix(a.query);
  const numcore::Mat gallery = store::load_matrix(a.gallery);
  const auto hits = evaluation::retrieve_topk(queries, gallery, a.k);

  std::vector<std::string> ids;
  if (!a.data.empty()) {
    const store::QuadrupletDataset ds = store::load_dataset(dataset_manifest(a.data));
    for (const auto& loc : ds.locations) ids.push_back(loc.id);
  }
  const bool query_ids = ids.size() == queries.rows;
  const bool gallery_ids = ids.size() == gallery.rows;

  json j;
  j["k"] = a.k;
  json items = json::array();
  for (std::size_t q = 0; q < hits.size(); ++q) {
    json it;
    it["query"] = q;
    if (query_ids) it["query_id"] = ids[q];
    json hs = json::array();
    for (const auto& h : hits[q]) {
      json e;
      e["index"] = h.index;
      e["sim"] = h.sim;
      if (gallery_ids) e["id"] = ids[h.index];
      hs.push_back(std::move(e));
    }
    it["hits"] = std::move(hs);
    items.push_back(std::move(it));
  }
  j["items"] = std::move(items);
  write_json_file(a.out, j);
  write_run_manifest_file(a.out, "retrieve", m.resolved());
  std::cerr << "retrieved top-" << a.k << " for " << hits.size() << " queries\n";
  return 0;
}

struct GradcheckArgs {
  std::size_t configs = 100;
  std::uint64_t seed = 0;
  double tol = 1e-4, h = 1e-6;
  std::string out, config;
};

int run_gradcheck(CLI::App* cmd, GradcheckArgs& a) {
  ConfigMerge m;
  m.load(a.config);
  m.merge(cmd, "--configs", "configs", a.configs);
  m.merge(cmd, "--tol", "tol", a.tol);
  m.merge(cmd, "--step", "h", a.h);
  m.merge(cmd, "--seed", "seed", a.seed);
  m.merge(cmd, "--out", "out", a.out);
  m.finish();

  selfcheck::SuiteConfig sc;
  sc.configs = a.configs;
  sc.seed = a.seed;
  sc.tol = a.tol;
  sc.h = a.h;
  const selfcheck::SuiteResult r = selfcheck::gradient_suite(sc);
  std::cerr << "gradient suite: " << r.configs << " configs, " << r.failures
            << " failures, max rel err " << r.max_rel_err << " (config " << r.worst_config
            << "), " << r.seconds << " s\n";
  if (!a.out.empty()) {
    json j;
    j["configs"] = r.configs;
    j["failures"] = r.failures;
    j["max_rel_err"] = r.max_rel_err;
    j["worst_config"] = r.worst_config;
    j["tol"] = a.tol;
    j["h"] = a.h;
    write_json_file(a.out, j);
    write_run_manifest_file(a.out, "gradcheck", m.resolved());
  }
  return r.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-view alignment pipeline"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* c_ingest = app.add_subcommand("ingest", "validate a dataset and rewrite it canonically");
  c_ingest->add_option("--data", ingest_args.data, "dataset manifest or directory")->required();
  c_ingest->add_option("--prompts", ingest_args.prompts, "optional prompt set to canonicalize");
  c_ingest->add_option("--seed", ingest_args.seed, "unused, recorded for provenance");
  c_ingest->add_option("--config", ingest_args.config, "JSON config file");
  c_ingest->add_option("--out", ingest_args.out, "output directory")->required();

  SynthArgs synth_args;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
  c_synth->add_option("--classes", synth_args.classes, "number of classes");
  c_synth->add_option("--per-class", synth_args.per_class, "locations per class");
  c_synth->add_option("--dim", synth_args.dim, "feature dimension");
  c_synth->add_option("--noise", synth_args.noise, "feature noise sigma");
  c_synth->add_option("--seed", synth_args.seed, "generator seed");
  c_synth->add_option("--config", synth_args.config, "JSON config file");
  c_synth->add_option("--out", synth_args.out, "output directory")->required();

  TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "contrastive training of the satellite branch");
  c_train->add_option("--data", train_args.data, "dataset manifest or directory")->required();
  c_train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
  c_train->add_option("--batch-size", train_args.cfg.batch_size, "batch size");
  c_train->add_option("--lr0", train_args.cfg.lr0, "initial learning rate");
  c_train->add_option("--tau", train_args.cfg.tau, "loss temperature");
  c_train->add_option("--lr-step", train_args.cfg.lr_step, "scheduler step size");
  c_train->add_option("--lr-gamma", train_args.cfg.lr_gamma, "scheduler decay");
  c_train->add_option("--queue-capacity", train_args.cfg.queue_capacity, "key queue capacity");
  c_train->add_option("--weight-decay", train_args.cfg.weight_decay, "AdamW weight decay");
  c_train->add_option("--dropout-rate", train_args.cfg.dropout_rate, "head dropout rate");
  c_train->add_option("--pool", train_args.pool, "ground pooling: avg or att");
  c_train->add_option("--loss-form", train_args.loss_form, "loss form: moco or paper");
  c_train->add_option("--seed", train_args.cfg.seed, "training seed");
  c_train->add_option("--config", train_args.config, "JSON config file");
  c_train->add_option("--out", train_args.out, "checkpoint directory")->required();

  EmbedArgs embed_args;
  auto* c_embed = app.add_subcommand("embed", "embed satellite features with a checkpoint");
  c_embed->add_option("--ckpt", embed_args.ckpt, "checkpoint directory")->required();
  c_embed->add_option("--data", embed_args.data, "dataset manifest or directory")->required();
  c_embed->add_option("--seed", embed_args.seed, "unused in eval mode, recorded");
  c_embed->add_option("--config", embed_args.config, "JSON config file");
  c_embed->add_option("--out", embed_args.out, "output directory")->required();

  SelectArgs select_args;
  auto* c_select = app.add_subcommand("select-prompts", "rank prompts and keep k per class");
  c_select->add_option("--prompts", select_args.prompts, "prompt set JSON")->required();
  c_select->add_option("-k", select_args.k, "prompts to keep per class");
  c_select->add_option("--mode", select_args.mode, "best, worst, or random");
  c_select->add_option("--report", select_args.report, "optional score report JSON path");
  c_select->add_option("--seed", select_args.seed, "seed for random mode");
  c_select->add_option("--config", select_args.config, "JSON config file");
  c_select->add_option("--out", select_args.out, "selected prompt set path")->required();

  ClassifyArgs classify_args;
  auto* c_classify = app.add_subcommand("classify", "zero-shot classification of embeddings");
  c_classify->add_option("--emb", classify_args.emb, "EMB1 file of embeddings")->required();
  c_classify->add_option("--prompts", classify_args.prompts, "prompt set JSON")->required();
  c_classify->add_option("--link", classify_args.link, "similarity link: shifted or exponential");
  c_classify->add_option("--link-eps", classify_args.link_eps, "floor for the shifted link");
  c_classify->add_option("--link-tau", classify_args.link_tau, "temperature for the exponential link");
  c_classify->add_option("--prior-data", classify_args.prior_data,
                         "EMB1 reference set for priors (default: transductive)");
  c_classify->add_option("--seed", classify_args.seed, "unused, recorded");
  c_classify->add_option("--config", classify_args.config, "JSON config file");
  c_classify->add_option("--out", classify_args.out, "predictions JSON path")->required();

  EvaluateArgs evaluate_args;
  auto* c_evaluate = app.add_subcommand("evaluate", "score predictions against dataset labels");
  c_evaluate->add_option("--pred", evaluate_args.pred, "predictions JSON")->required();
  c_evaluate->add_option("--data", evaluate_args.data, "dataset manifest or directory")->required();
  c_evaluate->add_option("--metric", evaluate_args.metric, "top1 or map");
  c_evaluate->add_option("--seed", evaluate_args.seed, "unused, recorded");
  c_evaluate->add_option("--config", evaluate_args.config, "JSON config file");
  c_evaluate->add_option("--out", evaluate_args.out, "metric report JSON path")->required();

  RetrieveArgs retrieve_args;
  auto* c_retrieve = app.add_subcommand("retrieve", "exact cosine top-k retrieval");
  c_retrieve->add_option("--query", retrieve_args.query, "EMB1 query matrix")->required();
  c_retrieve->add_option("--gallery", retrieve_args.gallery, "EMB1 gallery matrix")->required();
  c_retrieve->add_option("-k", retrieve_args.k, "neighbors per query");
  c_retrieve->add_option("--data", retrieve_args.data, "optional dataset for id resolution");
  c_retrieve->add_option("--seed", retrieve_args.seed, "unused, recorded");
  c_retrieve->add_option("--config", retrieve_args.config, "JSON config file");
  c_retrieve->add_option("--out", retrieve_args.out, "results JSON path")->required();

  GradcheckArgs gradcheck_args;
  auto* c_gradcheck = app.add_subcommand("gradcheck", "run the gradient self-check suite");
  c_gradcheck->add_option("--configs", gradcheck_args.configs, "random configurations");
  c_gradcheck->add_option("--tol", gradcheck_args.tol, "relative tolerance");
  c_gradcheck->add_option("--step", gradcheck_args.h, "finite-difference step");
  c_gradcheck->add_option("--seed", gradcheck_args.seed, "suite seed");
  c_gradcheck->add_option("--config", gradcheck_args.config, "JSON config file");
  c_gradcheck->add_option("--out", gradcheck_args.out, "optional report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand(c_ingest)) return run_ingest(c_ingest, ingest_args);
    if (app.got_subcommand(c_synth)) return run_synth(c_synth, synth_args);
    if (app.got_subcommand(c_train)) return run_train(c_train, train_args);
    if (app.got_subcommand(c_embed)) return run_embed(c_embed, embed_args);
    if (app.got_subcommand(c_select)) return run_select(c_select, select_args);
    if (app.got_subcommand(c_classify)) return run_classify(c_classify, classify_args);
    if (app.got_subcommand(c_evaluate)) return run_evaluate(c_evaluate, evaluate_args);
    if (app.got_subcommand(c_retrieve)) return run_retrieve(c_retrieve, retrieve_args);
    if (app.got_subcommand(c_gradcheck)) return run_gradcheck(c_gradcheck, gradcheck_args);
  } catch (const Error& e) {
    std::cerr << "error (" << kind_name(e.kind) << "): " << e.what() << "\n";
    return exit_code(e.kind);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
