#include "crossview/store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "crossview/ops.hpp"
#include "crossview/rng.hpp"

#include "json.hpp"

namespace fs = std::filesystem;

namespace crossview::store {

using nlohmann::json;

namespace {

constexpr std::size_t kPromptsPerClass = 10;
constexpr double kNormTol = 1e-3;
// Rows closer to unit than this are left untouched on load. Float32 storage
// perturbs a unit row's norm by ~1e-7 at most, so skipping keeps save-load
// round trips byte-exact while staying inside the downstream unit tolerance.
constexpr double kStorageTol = 1e-6;

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrKind::io, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) fail(ErrKind::io, "read failed: " + path.string());
  return ss.str();
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrKind::io, "cannot open for writing: " + path.string());
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  f.flush();
  if (!f) fail(ErrKind::io, "write failed: " + path.string());
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrKind::format, path.string() + ": invalid JSON: " + e.what());
  }
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

const json& need(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrKind::schema, std::string("missing field: ") + key);
  return j.at(key);
}

std::string need_string(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_string()) fail(ErrKind::schema, std::string(key) + " must be a string");
  return v.get<std::string>();
}

double need_number(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number()) fail(ErrKind::schema, std::string(key) + " must be a number");
  return v.get<double>();
}

std::int64_t need_int(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_integer())
    fail(ErrKind::schema, std::string(key) + " must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t need_uint(const json& j, const char* key) {
  const std::int64_t v = need_int(j, key);
  if (v < 0) fail(ErrKind::schema, std::string(key) + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

const json& need_array(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_array()) fail(ErrKind::schema, std::string(key) + " must be an array");
  return v;
}

void check_header(const json& j, const char* expect_type) {
  const std::string type = need_string(j, "type");
  if (type != expect_type)
    fail(ErrKind::schema, "wrong document type: expected " + std::string(expect_type) +
                              ", got " + type);
  const std::int64_t ver = need_int(j, "version");
  if (ver != 1) fail(ErrKind::version, "unsupported document version " + std::to_string(ver));
}

std::uint32_t row_index(const json& j, const char* key_for_msg, std::int64_t v,
                        std::size_t rows) {
  (void)j;
  if (v < 0 || static_cast<std::uint64_t>(v) >= rows)
    fail(ErrKind::reference, std::string(key_for_msg) + ": row index " +
                                 std::to_string(v) + " out of range (matrix has " +
                                 std::to_string(rows) + " rows)");
  return static_cast<std::uint32_t>(v);
}

void renormalize_rows(Mat& m, const char* what) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const double* row = m.row(r);
    for (std::size_t j = 0; j < m.cols; ++j) s += row[j] * row[j];
    const double n = std::sqrt(s);
    if (std::fabs(n - 1.0) > kNormTol)
      fail(ErrKind::normalization, std::string(what) + " row " + std::to_string(r) +
                                       " has norm " + std::to_string(n) +
                                       ", expected unit");
    if (std::fabs(n - 1.0) <= kStorageTol) continue;
    double* wr = m.row(r);
    for (std::size_t j = 0; j < m.cols; ++j) wr[j] /= n;
  }
}

json train_config_to_json(const trainer::TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr0"] = cfg.lr0;
  j["tau"] = cfg.tau;
  j["lr_step"] = cfg.lr_step;
  j["lr_gamma"] = cfg.lr_gamma;
  j["queue_capacity"] = cfg.queue_capacity;
  j["weight_decay"] = cfg.weight_decay;
  j["dropout_rate"] = cfg.dropout_rate;
  j["pool"] = pooling::to_string(cfg.pool);
  j["loss_form"] = trainer::to_string(cfg.loss_form);
  j["seed"] = cfg.seed;
  return j;
}

trainer::TrainConfig train_config_from_json(const json& j) {
  trainer::TrainConfig cfg;
  cfg.epochs = need_uint(j, "epochs");
  cfg.batch_size = need_uint(j, "batch_size");
  cfg.lr0 = need_number(j, "lr0");
  cfg.tau = need_number(j, "tau");
  cfg.lr_step = need_uint(j, "lr_step");
  cfg.lr_gamma = need_number(j, "lr_gamma");
  cfg.queue_capacity = need_uint(j, "queue_capacity");
  cfg.weight_decay = need_number(j, "weight_decay");
  cfg.dropout_rate = need_number(j, "dropout_rate");
  cfg.pool = pooling::pool_mode_from_string(need_string(j, "pool"));
  cfg.loss_form = trainer::loss_form_from_string(need_string(j, "loss_form"));
  cfg.seed = need_uint(j, "seed");
  return cfg;
}

}  // namespace

void save_matrix(const Mat& m, const fs::path& path) {
  if (m.data.size() != m.rows * m.cols)
    fail(ErrKind::dimension, "save_matrix: shape does not match payload");
  if (m.rows > 0xffffffffull || m.cols > 0xffffffffull)
    fail(ErrKind::dimension, "save_matrix: shape exceeds format limits");
  std::string buf;
  buf.reserve(20 + 4 * m.data.size());
  buf += "EMB1";
  put_u32(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(m.rows));
  put_u32(buf, static_cast<std::uint32_t>(m.cols));
  buf.push_back(1);  // dtype: float32 little-endian
  buf.append(3, '\0');
  for (double v : m.data) {
    const float fv = static_cast<float>(v);
    put_u32(buf, std::bit_cast<std::uint32_t>(fv));
  }
  write_file(path, buf);
}

Mat load_matrix(const fs::path& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 4 || buf.compare(0, 4, "EMB1") != 0)
    fail(ErrKind::format, path.string() + ": bad magic, not an EMB1 file");
  if (buf.size() < 20) fail(ErrKind::corruption, path.string() + ": truncated header");
  const std::uint32_t version = get_u32(buf, 4);
  if (version != 1)
    fail(ErrKind::version, path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t rows = get_u32(buf, 8);
  const std::uint32_t cols = get_u32(buf, 12);
  const unsigned char dtype = static_cast<unsigned char>(buf[16]);
  if (dtype != 1)
    fail(ErrKind::version, path.string() + ": unsupported dtype code " + std::to_string(dtype));
  if (buf[17] != 0 || buf[18] != 0 || buf[19] != 0)
    fail(ErrKind::format, path.string() + ": nonzero header padding");
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  if (count > (std::numeric_limits<std::uint64_t>::max() - 20) / 4)
    fail(ErrKind::corruption, path.string() + ": header implies oversized payload");
  const std::uint64_t expect = 20 + 4 * count;
  if (buf.size() != expect)
    fail(ErrKind::corruption, path.string() + ": payload size mismatch (header implies " +
                                  std::to_string(expect) + " bytes, file has " +
                                  std::to_string(buf.size()) + ")");
  Mat m(rows, cols);
  for (std::uint64_t k = 0; k < count; ++k) {
    const float fv = std::bit_cast<float>(get_u32(buf, 20 + 4 * k));
    if (!std::isfinite(fv))
      fail(ErrKind::corruption,
           path.string() + ": non-finite value at index " + std::to_string(k));
    m.data[k] = static_cast<double>(fv);
  }
  return m;
}

Mat QuadrupletDataset::quad(std::size_t i) const {
  if (i >= locations.size()) fail(ErrKind::reference, "quad: location index out of range");
  Mat q(4, ground.cols);
  for (std::size_t k = 0; k < 4; ++k)
    q.set_row(k, ground.row_vec(locations[i].ground_rows[k]));
  return q;
}

Vec QuadrupletDataset::sat_feature(std::size_t i) const {
  if (i >= locations.size())
    fail(ErrKind::reference, "sat_feature: location index out of range");
  return sat.row_vec(locations[i].sat_row);
}

QuadrupletDataset load_dataset(const fs::path& manifest_path) {
  const json j = parse_json_file(manifest_path);
  check_header(j, "quadruplet_dataset");
  QuadrupletDataset ds;
  ds.ground_ref = need_string(j, "ground_matrix");
  ds.sat_ref = need_string(j, "sat_matrix");
  if (j.contains("normalized")) {
    if (!j.at("normalized").is_boolean())
      fail(ErrKind::schema, "normalized must be a boolean");
    ds.normalized = j.at("normalized").get<bool>();
  }
  const fs::path dir = manifest_path.parent_path();
  ds.ground = load_matrix(dir / ds.ground_ref);
  ds.sat = load_matrix(dir / ds.sat_ref);
  if (ds.normalized) {
    renormalize_rows(ds.ground, "ground matrix");
    renormalize_rows(ds.sat, "sat matrix");
  }

  const json& locs = need_array(j, "locations");
  std::set<std::string> seen_ids;
  ds.locations.reserve(locs.size());
  for (const json& L : locs) {
    LocationRecord rec;
    rec.id = need_string(L, "id");
    if (!seen_ids.insert(rec.id).second)
      fail(ErrKind::schema, "duplicate location id: " + rec.id);
    rec.lat = need_number(L, "lat");
    rec.lon = need_number(L, "lon");
    if (rec.lat < -90.0 || rec.lat > 90.0)
      fail(ErrKind::schema, rec.id + ": lat out of range");
    if (rec.lon < -180.0 || rec.lon > 180.0)
      fail(ErrKind::schema, rec.id + ": lon out of range");
    const json& gr = need_array(L, "ground_rows");
    if (gr.size() != 4)
      fail(ErrKind::schema,
           rec.id + ": ground_rows must list exactly 4 rows, got " + std::to_string(gr.size()));
    for (std::size_t k = 0; k < 4; ++k) {
      if (!gr[k].is_number_integer())
        fail(ErrKind::schema, rec.id + ": ground_rows entries must be integers");
      rec.ground_rows[k] =
          row_index(L, "ground_rows", gr[k].get<std::int64_t>(), ds.ground.rows);
    }
    rec.sat_row = row_index(L, "sat_row", need_int(L, "sat_row"), ds.sat.rows);
    if (L.contains("labels")) {
      const json& lab = L.at("labels");
      if (!lab.is_array()) fail(ErrKind::schema, rec.id + ": labels must be an array");
      for (const json& v : lab) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
          fail(ErrKind::schema, rec.id + ": labels must be non-negative integers");
        rec.labels.push_back(static_cast<std::uint32_t>(v.get<std::int64_t>()));
      }
    }
    if (L.contains("split")) {
      if (!L.at("split").is_string())
        fail(ErrKind::schema, rec.id + ": split must be a string");
      rec.split = L.at("split").get<std::string>();
    }
    ds.locations.push_back(std::move(rec));
  }
  return ds;
}

void save_dataset(const QuadrupletDataset& ds, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  save_matrix(ds.ground, dir / ds.ground_ref);
  save_matrix(ds.sat, dir / ds.sat_ref);
  json j;
  j["type"] = "quadruplet_dataset";
  j["version"] = 1;
  j["ground_matrix"] = ds.ground_ref;
  j["sat_matrix"] = ds.sat_ref;
  j["normalized"] = ds.normalized;
  json locs = json::array();
  for (const auto& rec : ds.locations) {
    json L;
    L["id"] = rec.id;
    L["lat"] = rec.lat;
    L["lon"] = rec.lon;
    L["ground_rows"] = rec.ground_rows;
    L["sat_row"] = rec.sat_row;
    if (!rec.labels.empty()) L["labels"] = rec.labels;
    if (!rec.split.empty()) L["split"] = rec.split;
    locs.push_back(std::move(L));
  }
  j["locations"] = std::move(locs);
  write_file(manifest_path, dump_json(j));
}

std::size_t PromptSet::T() const {
  if (classes.empty()) fail(ErrKind::contract, "prompt set has no classes");
  if (unequal_T) fail(ErrKind::contract, "prompt set has unequal prompt counts per class");
  return classes[0].prompts.size();
}

Vec PromptSet::prompt_vec(std::size_t c, std::size_t t) const {
  if (c >= classes.size() || t >= classes[c].prompts.size())
    fail(ErrKind::reference, "prompt_vec: index out of range");
  return matrix.row_vec(classes[c].prompts[t].row);
}

PromptSet load_prompt_set(const fs::path& path) {
  const json j = parse_json_file(path);
  check_header(j, "prompt_set");
  PromptSet ps;
  ps.matrix_ref = need_string(j, "matrix");
  if (j.contains("view_tag")) {
    if (!j.at("view_tag").is_string())
      fail(ErrKind::schema, "view_tag must be a string");
    ps.view_tag = j.at("view_tag").get<std::string>();
  }
  ps.matrix = load_matrix(path.parent_path() / ps.matrix_ref);

  const json& classes = need_array(j, "classes");
  if (classes.empty()) fail(ErrKind::schema, "prompt set has no classes");
  std::set<std::string> seen_names;
  for (const json& C : classes) {
    PromptClass pc;
    pc.name = need_string(C, "name");
    if (pc.name.empty()) fail(ErrKind::schema, "class name must be non-empty");
    if (!seen_names.insert(pc.name).second)
      fail(ErrKind::schema, "duplicate class name: " + pc.name);
    const json& prompts = need_array(C, "prompts");
    if (prompts.empty())
      fail(ErrKind::schema, pc.name + ": every class needs at least one prompt");
    for (const json& P : prompts) {
      Prompt p;
      p.row = row_index(P, "prompt row", need_int(P, "row"), ps.matrix.rows);
      if (P.contains("text")) {
        if (!P.at("text").is_string()) fail(ErrKind::schema, "prompt text must be a string");
        p.text = P.at("text").get<std::string>();
      }
      if (P.contains("score")) {
        if (!P.at("score").is_number()) fail(ErrKind::schema, "prompt score must be a number");
        p.score = P.at("score").get<double>();
      }
      pc.prompts.push_back(std::move(p));
    }
    ps.classes.push_back(std::move(pc));
  }

  // renormalize referenced rows; warn when storage rounding cannot explain the drift
  std::set<std::uint32_t> done;
  for (const auto& pc : ps.classes)
    for (const auto& p : pc.prompts) {
      if (!done.insert(p.row).second) continue;
      double s = 0.0;
      double* row = ps.matrix.row(p.row);
      for (std::size_t k = 0; k < ps.matrix.cols; ++k) s += row[k] * row[k];
      const double n = std::sqrt(s);
      if (n <= 1e-12)
        fail(ErrKind::normalization,
             "prompt row " + std::to_string(p.row) + " has zero norm");
      if (std::fabs(n - 1.0) > kNormTol)
        std::cerr << "warning: prompt row " << p.row << " renormalized (norm " << n
                  << ")\n";
      if (std::fabs(n - 1.0) <= kStorageTol) continue;
      for (std::size_t k = 0; k < ps.matrix.cols; ++k) row[k] /= n;
    }

  const std::size_t t0 = ps.classes[0].prompts.size();
  for (const auto& pc : ps.classes)
    if (pc.prompts.size() != t0) ps.unequal_T = true;
  return ps;
}

void save_prompt_set(const PromptSet& ps, const fs::path& path) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::string ref = ps.matrix_ref;
  if (ref.empty()) ref = path.stem().string() + ".emb1";
  save_matrix(ps.matrix, dir / ref);
  json j;
  j["type"] = "prompt_set";
  j["version"] = 1;
  j["matrix"] = ref;
  if (!ps.view_tag.empty()) j["view_tag"] = ps.view_tag;
  json classes = json::array();
  for (const auto& pc : ps.classes) {
    json C;
    C["name"] = pc.name;
    json prompts = json::array();
    for (const auto& p : pc.prompts) {
      json P;
      P["row"] = p.row;
      if (p.text) P["text"] = *p.text;
      if (p.score) P["score"] = *p.score;
      prompts.push_back(std::move(P));
    }
    C["prompts"] = std::move(prompts);
    classes.push_back(std::move(C));
  }
  j["classes"] = std::move(classes);
  write_file(path, dump_json(j));
}

void save_checkpoint(const ModelCheckpoint& ckpt, const fs::path& dir) {
  if (ckpt.d_in != ckpt.params.d_in() || ckpt.d_out != ckpt.params.d_out())
    fail(ErrKind::checkpoint, "checkpoint dims do not match parameter shapes");
  fs::create_directories(dir);
  align::ModelParams params = ckpt.params;  // views need mutable storage
  auto views = align::tensor_views(params);
  const std::size_t total = align::param_count(params);
  Vec m = ckpt.opt.m, v = ckpt.opt.v;
  if (m.empty()) m.assign(total, 0.0);
  if (v.empty()) v.assign(total, 0.0);
  if (m.size() != total || v.size() != total)
    fail(ErrKind::checkpoint, "optimizer moment length does not match parameter count");

  json jt = json::array();
  std::size_t off = 0;
  for (const auto& view : views) {
    Mat t(view.rows, view.cols);
    std::copy(view.data, view.data + view.count(), t.data.begin());
    save_matrix(t, dir / (std::string(view.name) + ".emb1"));
    Mat tm(view.rows, view.cols), tv(view.rows, view.cols);
    std::copy(m.begin() + off, m.begin() + off + view.count(), tm.data.begin());
    std::copy(v.begin() + off, v.begin() + off + view.count(), tv.data.begin());
    save_matrix(tm, dir / ("m_" + std::string(view.name) + ".emb1"));
    save_matrix(tv, dir / ("v_" + std::string(view.name) + ".emb1"));
    off += view.count();
    json e;
    e["name"] = view.name;
    e["file"] = std::string(view.name) + ".emb1";
    e["rows"] = view.rows;
    e["cols"] = view.cols;
    jt.push_back(std::move(e));
  }

  json j;
  j["type"] = "model_checkpoint";
  j["version"] = 1;
  j["dims"] = {{"d_in", ckpt.d_in}, {"d_hidden", ckpt.d_out}, {"d_out", ckpt.d_out}};
  j["epoch"] = ckpt.epoch;
  j["hyper"] = train_config_to_json(ckpt.cfg);
  j["optimizer"] = {{"t", ckpt.opt.t},
                    {"beta1", ckpt.opt.beta1},
                    {"beta2", ckpt.opt.beta2},
                    {"eps", ckpt.opt.eps}};
  j["tensors"] = std::move(jt);
  write_file(dir / "checkpoint.json", dump_json(j));
}

ModelCheckpoint load_checkpoint(const fs::path& dir) {
  const json j = parse_json_file(dir / "checkpoint.json");
  check_header(j, "model_checkpoint");
  ModelCheckpoint ckpt;
  const json& dims = need(j, "dims");
  ckpt.d_in = need_uint(dims, "d_in");
  ckpt.d_out = need_uint(dims, "d_out");
  if (need_uint(dims, "d_hidden") != ckpt.d_out)
    fail(ErrKind::checkpoint, "d_hidden must equal d_out in this layout");
  if (ckpt.d_in < 1 || ckpt.d_out < 1)
    fail(ErrKind::checkpoint, "checkpoint dims must be >= 1");
  ckpt.epoch = need_uint(j, "epoch");
  ckpt.cfg = train_config_from_json(need(j, "hyper"));
  const json& opt = need(j, "optimizer");
  ckpt.opt.t = need_uint(opt, "t");
  ckpt.opt.beta1 = need_number(opt, "beta1");
  ckpt.opt.beta2 = need_number(opt, "beta2");
  ckpt.opt.eps = need_number(opt, "eps");

  ckpt.params = align::init_params(ckpt.d_in, ckpt.d_out, 0);
  ckpt.params.head.dropout_rate = ckpt.cfg.dropout_rate;
  auto views = align::tensor_views(ckpt.params);
  const json& jt = need_array(j, "tensors");
  if (jt.size() != views.size())
    fail(ErrKind::checkpoint, "checkpoint lists " + std::to_string(jt.size()) +
                                  " tensors, expected " + std::to_string(views.size()));
  const std::size_t total = align::param_count(ckpt.params);
  ckpt.opt.m.clear();
  ckpt.opt.v.clear();
  ckpt.opt.m.reserve(total);
  ckpt.opt.v.reserve(total);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const json& e = jt[i];
    const std::string name = need_string(e, "name");
    if (name != views[i].name)
      fail(ErrKind::checkpoint, "unexpected tensor order: got " + name + ", expected " +
                                    views[i].name);
    if (need_uint(e, "rows") != views[i].rows || need_uint(e, "cols") != views[i].cols)
      fail(ErrKind::checkpoint, name + ": declared shape does not match model dims");
    const Mat t = load_matrix(dir / need_string(e, "file"));
    if (t.rows != views[i].rows || t.cols != views[i].cols)
      fail(ErrKind::checkpoint, name + ": stored shape does not match declaration");
    std::copy(t.data.begin(), t.data.end(), views[i].data);
    const Mat tm = load_matrix(dir / ("m_" + name + ".emb1"));
    const Mat tv = load_matrix(dir / ("v_" + name + ".emb1"));
    if (tm.rows != views[i].rows || tm.cols != views[i].cols || tv.rows != views[i].rows ||
        tv.cols != views[i].cols)
      fail(ErrKind::checkpoint, name + ": moment shape does not match tensor");
    ckpt.opt.m.insert(ckpt.opt.m.end(), tm.data.begin(), tm.data.end());
    ckpt.opt.v.insert(ckpt.opt.v.end(), tv.data.begin(), tv.data.end());
  }
  return ckpt;
}

SynthResult synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dim,
                          double noise, std::uint64_t seed) {
  if (classes < 2) fail(ErrKind::parameter, "synth: classes must be >= 2");
  if (per_class < 2) fail(ErrKind::parameter, "synth: per_class must be >= 2");
  if (dim < 4) fail(ErrKind::parameter, "synth: dim must be >= 4");
  if (noise < 0.0) fail(ErrKind::parameter, "synth: noise must be non-negative");

  numcore::Rng rng(seed);
  auto draw = [&] {
    Vec v(dim);
    for (double& x : v) x = rng.gauss();
    return v;
  };

  // class anchors plus one generic direction, orthonormal while dim allows
  std::vector<Vec> basis;
  auto next_dir = [&] {
    for (;;) {
      Vec v = draw();
      if (basis.size() < dim) {
        for (const Vec& b : basis) {
          const double p = numcore::dot(v, b);
          for (std::size_t k = 0; k < dim; ++k) v[k] -= p * b[k];
        }
        if (numcore::norm2(v) <= 1e-6) continue;
        v = numcore::l2_normalize(v);
        basis.push_back(v);
        return v;
      }
      return numcore::l2_normalize(v);
    }
  };
  std::vector<Vec> anchors(classes);
  for (std::size_t c = 0; c < classes; ++c) anchors[c] = next_dir();
  const Vec generic = next_dir();

  // fixed random rotation taking ground space to satellite space
  Mat R(dim, dim);
  {
    std::vector<Vec> cols;
    while (cols.size() < dim) {
      Vec v = draw();
      for (const Vec& b : cols) {
        const double p = numcore::dot(v, b);
        for (std::size_t k = 0; k < dim; ++k) v[k] -= p * b[k];
      }
      if (numcore::norm2(v) <= 1e-6) continue;
      cols.push_back(numcore::l2_normalize(v));
    }
    for (std::size_t jc = 0; jc < dim; ++jc)
      for (std::size_t i = 0; i < dim; ++i) R.at(i, jc) = cols[jc][i];
  }
  auto rotate = [&](const Vec& a) {
    Vec y(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      const double* row = R.row(i);
      double acc = 0.0;
      for (std::size_t k = 0; k < dim; ++k) acc += row[k] * a[k];
      y[i] = acc;
    }
    return y;
  };
  auto noisy_unit = [&](const Vec& base) {
    Vec v = base;
    for (std::size_t k = 0; k < dim; ++k) v[k] += noise * rng.gauss();
    return numcore::l2_normalize(v);
  };

  SynthResult out;
  const std::size_t n = classes * per_class;
  out.dataset.ground = Mat(4 * n, dim);
  out.dataset.sat = Mat(n, dim);
  out.dataset.locations.reserve(n);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t i = c * per_class + k;
      for (std::size_t d4 = 0; d4 < 4; ++d4)
        out.dataset.ground.set_row(4 * i + d4, noisy_unit(anchors[c]));
      out.dataset.sat.set_row(i, noisy_unit(rotate(anchors[c])));
      LocationRecord rec;
      char idbuf[16];
      std::snprintf(idbuf, sizeof idbuf, "loc%05zu", i);
      rec.id = idbuf;
      rec.lat = rng.uniform(-90.0, 90.0);
      rec.lon = rng.uniform(-180.0, 180.0);
      for (std::size_t d4 = 0; d4 < 4; ++d4)
        rec.ground_rows[d4] = static_cast<std::uint32_t>(4 * i + d4);
      rec.sat_row = static_cast<std::uint32_t>(i);
      rec.labels = {static_cast<std::uint32_t>(c)};
      rec.split = "train";
      out.dataset.locations.push_back(std::move(rec));
    }
  }

  const std::size_t T = kPromptsPerClass;
  auto make_set = [&](const char* tag, const char* ref) {
    PromptSet ps;
    ps.matrix = Mat(classes * T, dim);
    ps.matrix_ref = ref;
    ps.view_tag = tag;
    for (std::size_t c = 0; c < classes; ++c) {
      PromptClass pc;
      char nbuf[24];
      std::snprintf(nbuf, sizeof nbuf, "class%02zu", c);
      pc.name = nbuf;
      for (std::size_t t = 0; t < T; ++t)
        pc.prompts.push_back(Prompt{static_cast<std::uint32_t>(c * T + t), {}, {}});
      ps.classes.push_back(std::move(pc));
    }
    return ps;
  };

  out.clean_prompts = make_set("synthetic-clean", "prompts_clean.emb1");
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t t = 0; t < T; ++t)
      out.clean_prompts.matrix.set_row(c * T + t, noisy_unit(anchors[c]));

  // Corrupted prompts share the generic direction instead of pure noise: isolated
  // random prompts would get a near-zero global mean and an inflated alpha/beta
  // ratio from the self term, inverting the selection order.
  out.corrupted_prompts = make_set("synthetic-corrupted", "prompts_corrupted.emb1");
  out.corrupted_prompts.matrix = out.clean_prompts.matrix;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t t = T / 2; t < T; ++t) {
      Vec v = generic;
      const Vec z = numcore::l2_normalize(draw());
      for (std::size_t k = 0; k < dim; ++k) v[k] += z[k];
      out.corrupted_prompts.matrix.set_row(c * T + t, numcore::l2_normalize(v));
    }

  return out;
}

}  // namespace crossview::store
