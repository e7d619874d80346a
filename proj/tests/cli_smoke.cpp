// Drives the installed binary end to end through std::system. Machine output
// goes to files, progress to a per-invocation log, so the checks below read
// artifacts instead of scraping stdout.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crossview/store.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("crossview_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  REQUIRE(f.good());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// runs the binary with the given arguments, capturing stderr+stdout
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string("\"") + CROSSVIEW_BIN + "\" " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

bool log_contains(const fs::path& log, const std::string& needle) {
  return slurp(log).find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("the pipeline runs end to end and replays byte-identically") {
  TempDir tmp;
  const fs::path d = tmp.path;
  int log_id = 0;
  auto log = [&] { return d / ("log" + std::to_string(log_id++) + ".txt"); };
  const std::string data = (d / "data").string();
  const std::string ckpt = (d / "ckpt").string();
  const std::string emb = (d / "emb").string();

  REQUIRE(run_cli("synth --classes 3 --per-class 6 --dim 12 --noise 0.05 --seed 5 --out " +
                      data,
                  log()) == 0);
  for (const char* name : {"dataset.json", "ground.emb1", "sat.emb1", "prompts_clean.json",
                           "prompts_clean.emb1", "prompts_corrupted.json", "run.json"})
    CHECK(fs::is_regular_file(d / "data" / name));
  const json run = json::parse(slurp(d / "data" / "run.json"));
  CHECK(run.at("command") == "synth");
  CHECK(run.at("parameters").at("classes") == 3);
  CHECK(run.at("parameters").at("noise") == 0.05);

  REQUIRE(run_cli("train --data " + data +
                      " --epochs 2 --batch-size 3 --queue-capacity 6 --seed 5 --out " +
                      ckpt,
                  log()) == 0);
  CHECK(fs::is_regular_file(d / "ckpt" / "checkpoint.json"));
  CHECK(fs::is_regular_file(d / "ckpt" / "loss_log.jsonl"));
  CHECK(fs::is_directory(d / "ckpt" / "epoch_001"));
  CHECK(fs::is_directory(d / "ckpt" / "epoch_002"));

  REQUIRE(run_cli("embed --ckpt " + ckpt + " --data " + data + " --out " + emb, log()) ==
          0);
  const crossview::numcore::Mat sat_emb =
      crossview::store::load_matrix(d / "emb" / "sat_embeddings.emb1");
  CHECK(sat_emb.rows == 18);
  CHECK(sat_emb.cols == 12);
  CHECK(crossview::store::load_matrix(d / "emb" / "ground_pooled.emb1").rows == 18);

  const std::string picked = (d / "picked.json").string();
  REQUIRE(run_cli("select-prompts --prompts " + data +
                      "/prompts_clean.json -k 2 --mode best --report " +
                      (d / "report.json").string() + " --out " + picked,
                  log()) == 0);
  const crossview::store::PromptSet ps = crossview::store::load_prompt_set(picked);
  CHECK(ps.C() == 3);
  CHECK(ps.T() == 2);
  const json report = json::parse(slurp(d / "report.json"));
  CHECK(report.at("classes").size() == 3);
  CHECK(report.at("classes")[0].at("w").size() == 10);

  const std::string pred = (d / "pred.json").string();
  REQUIRE(run_cli("classify --emb " + emb + "/sat_embeddings.emb1 --prompts " + picked +
                      " --out " + pred,
                  log()) == 0);
  const json pj = json::parse(slurp(pred));
  CHECK(pj.at("classes").size() == 3);
  CHECK(pj.at("prior_source") == "transductive");
  REQUIRE(pj.at("items").size() == 18);
  for (const auto& it : pj.at("items")) {
    CHECK(it.at("label_index").get<int>() < 3);
    CHECK(it.at("scores").size() == 3);
  }

  REQUIRE(run_cli("evaluate --pred " + pred + " --data " + data +
                      " --metric top1 --out " + (d / "top1.json").string(),
                  log()) == 0);
  const json top1 = json::parse(slurp(d / "top1.json"));
  CHECK(top1.at("count") == 18);
  CHECK(top1.at("value").get<double>() >= 0.0);
  CHECK(top1.at("value").get<double>() <= 1.0);

  REQUIRE(run_cli("evaluate --pred " + pred + " --data " + data + " --metric map --out " +
                      (d / "map.json").string(),
                  log()) == 0);
  const json mapj = json::parse(slurp(d / "map.json"));
  CHECK(mapj.at("per_class_ap").size() == 3);
  CHECK(mapj.at("value").get<double>() >= 0.0);

  REQUIRE(run_cli("retrieve --query " + emb + "/sat_embeddings.emb1 --gallery " + emb +
                      "/ground_pooled.emb1 -k 3 --data " + data + " --out " +
                      (d / "ret.json").string(),
                  log()) == 0);
  const json ret = json::parse(slurp(d / "ret.json"));
  REQUIRE(ret.at("items").size() == 18);
  CHECK(ret.at("items")[0].at("hits").size() == 3);
  CHECK(ret.at("items")[0].at("hits")[0].contains("id"));
  CHECK(ret.at("items")[0].contains("query_id"));

  REQUIRE(run_cli("gradcheck --configs 5 --seed 1 --out " + (d / "gc.json").string(),
                  log()) == 0);
  const json gc = json::parse(slurp(d / "gc.json"));
  CHECK(gc.at("failures") == 0);
  CHECK(gc.at("configs") == 5);

  // identical invocations, identical bytes
  const std::string data2 = (d / "data2").string();
  REQUIRE(run_cli("synth --classes 3 --per-class 6 --dim 12 --noise 0.05 --seed 5 --out " +
                      data2,
                  log()) == 0);
  CHECK(slurp(d / "data2" / "dataset.json") == slurp(d / "data" / "dataset.json"));
  CHECK(slurp(d / "data2" / "ground.emb1") == slurp(d / "data" / "ground.emb1"));

  const std::string emb2 = (d / "emb2").string();
  REQUIRE(run_cli("embed --ckpt " + ckpt + " --data " + data + " --out " + emb2, log()) ==
          0);
  CHECK(slurp(d / "emb2" / "sat_embeddings.emb1") ==
        slurp(d / "emb" / "sat_embeddings.emb1"));

  const std::string pred2 = (d / "pred2.json").string();
  REQUIRE(run_cli("classify --emb " + emb + "/sat_embeddings.emb1 --prompts " + picked +
                      " --out " + pred2,
                  log()) == 0);
  CHECK(slurp(pred2) == slurp(pred));

  // a canonicalizing ingest of canonical output is a byte-level no-op
  const std::string ing = (d / "ing").string();
  REQUIRE(run_cli("ingest --data " + data + " --prompts " + data +
                      "/prompts_clean.json --out " + ing,
                  log()) == 0);
  CHECK(slurp(d / "ing" / "dataset.json") == slurp(d / "data" / "dataset.json"));
  CHECK(slurp(d / "ing" / "ground.emb1") == slurp(d / "data" / "ground.emb1"));
  CHECK(slurp(d / "ing" / "prompts_clean.json") == slurp(d / "data" / "prompts_clean.json"));
}

TEST_CASE("failures map to typed messages and exit codes") {
  TempDir tmp;
  const fs::path d = tmp.path;
  const fs::path log = d / "log.txt";

  SUBCASE("a missing dataset is an io error with exit code 2") {
    CHECK(run_cli("train --data " + (d / "nope").string() + " --out " +
                      (d / "out").string(),
                  log) == 2);
    CHECK(log_contains(log, "error (io)"));
  }
  SUBCASE("a malformed embedding file is rejected with exit code 2") {
    spit(d / "junk.emb1", "EMxx");
    spit(d / "prompts.json", "{}");
    CHECK(run_cli("classify --emb " + (d / "junk.emb1").string() + " --prompts " +
                      (d / "prompts.json").string() + " --out " + (d / "p.json").string(),
                  log) == 2);
    CHECK(log_contains(log, "error (format)"));
  }
  SUBCASE("an unknown flag fails parsing with exit code 1") {
    CHECK(run_cli("synth --bogus-flag 3 --out " + (d / "o").string(), log) == 1);
  }
  SUBCASE("a missing required flag fails parsing with exit code 1") {
    CHECK(run_cli("synth --classes 3", log) == 1);
  }
  SUBCASE("an unknown subcommand fails with exit code 1") {
    CHECK(run_cli("transmogrify", log) == 1);
  }
  SUBCASE("an unknown config key is a schema error") {
    spit(d / "cfg.json", "{\"bogus\": 1}\n");
    CHECK(run_cli("synth --config " + (d / "cfg.json").string() + " --out " +
                      (d / "o").string(),
                  log) == 1);
    CHECK(log_contains(log, "error (schema)"));
    CHECK(log_contains(log, "bogus"));
  }
  SUBCASE("an unknown metric is a parameter error") {
    const std::string data = (d / "data").string();
    REQUIRE(run_cli("synth --classes 2 --per-class 2 --dim 8 --noise 0.05 --seed 1 --out " +
                        data,
                    log) == 0);
    std::string items;
    for (int i = 0; i < 4; ++i)
      items += std::string(i ? "," : "") + "{\"label_index\":0,\"scores\":[1.0,0.0]}";
    spit(d / "pred.json",
         "{\"classes\":[\"class00\",\"class01\"],\"items\":[" + items + "]}");
    CHECK(run_cli("evaluate --pred " + (d / "pred.json").string() + " --data " + data +
                      " --metric bogus --out " + (d / "m.json").string(),
                  log) == 1);
    CHECK(log_contains(log, "error (parameter)"));
  }
  SUBCASE("asking for help succeeds") { CHECK(run_cli("--help", log) == 0); }
}

TEST_CASE("config file values merge beneath command-line flags") {
  TempDir tmp;
  const fs::path d = tmp.path;
  int log_id = 0;
  auto log = [&] { return d / ("log" + std::to_string(log_id++) + ".txt"); };
  const std::string data = (d / "data").string();
  REQUIRE(run_cli("synth --classes 2 --per-class 4 --dim 8 --noise 0.05 --seed 1 --out " +
                      data,
                  log()) == 0);

  spit(d / "train.json",
       "{\"epochs\": 1, \"batch_size\": 4, \"queue_capacity\": 4, \"seed\": 9}\n");
  const std::string ckpt = (d / "ckpt").string();
  REQUIRE(run_cli("train --data " + data + " --config " + (d / "train.json").string() +
                      " --batch-size 2 --queue-capacity 6 --out " + ckpt,
                  log()) == 0);
  // config supplied the epoch count; the flags overrode the batch settings
  CHECK(fs::is_directory(d / "ckpt" / "epoch_001"));
  CHECK(!fs::exists(d / "ckpt" / "epoch_002"));
  const json run = json::parse(slurp(d / "ckpt" / "run.json"));
  CHECK(run.at("parameters").at("epochs") == 1);
  CHECK(run.at("parameters").at("batch_size") == 2);
  CHECK(run.at("parameters").at("queue_capacity") == 6);
  CHECK(run.at("parameters").at("seed") == 9);
}
