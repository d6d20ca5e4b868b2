#include "splatedit/session.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "splatedit/scorer.hpp"

namespace splatedit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr const char* kSceneFile = "scene.ply";
constexpr const char* kLabelsJson = "labels.json";
constexpr const char* kLabelsBin = "labels.bin";
constexpr const char* kConfigFile = "config.json";
constexpr const char* kJournalFile = "journal.bin";
constexpr const char* kCatalogFile = "catalog.json";
constexpr const char* kGroundingCacheFile = "grounding_cache.json";
constexpr const char* kTimingsFile = "timings.jsonl";

constexpr std::size_t kIndexCacheSlots = 2;

std::string random_session_id() {
  std::random_device rd;
  std::mt19937_64 gen((std::uint64_t(rd()) << 32) ^ rd());
  std::ostringstream out;
  out << std::hex << gen();
  return out.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json up_json(const Vec3& up) {
  if (up == Vec3::UnitZ()) return "z";
  if (up == Vec3::UnitY()) return "y";
  return json::array({up.x(), up.y(), up.z()});
}

Vec3 up_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "z") return Vec3::UnitZ();
    if (s == "y") return Vec3::UnitY();
    throw InvalidArgumentError("up axis must be 'z' or 'y', got '" + s + "'");
  }
  const Vec3 v(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
  if (!(v.norm() > 0.0)) throw InvalidArgumentError("up axis must be nonzero");
  return v.normalized();
}

json knobs_json(const EditKnobs& k) {
  return {{"knn_k", k.knn_k},
          {"kappa", k.kappa},
          {"step_ratio", k.step_ratio},
          {"max_move_ratio", k.max_move_ratio},
          {"inpaint", k.inpaint},
          {"keep_sh_rest", k.keep_sh_rest},
          {"up_axis", up_json(k.up)},
          {"margin_ratio", k.margin_ratio}};
}

EditKnobs apply_knobs(const json& j, EditKnobs k) {
  if (!j.is_object()) throw InvalidArgumentError("knobs must be a JSON object");
  for (const auto& [raw, v] : j.items()) {
    std::string key = raw;
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "knn_k") {
      k.knn_k = v.get<std::size_t>();
    } else if (key == "kappa") {
      k.kappa = v.get<double>();
    } else if (key == "step_ratio") {
      k.step_ratio = v.get<double>();
    } else if (key == "max_move_ratio") {
      k.max_move_ratio = v.get<double>();
    } else if (key == "inpaint") {
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s != "on" && s != "off") throw InvalidArgumentError("inpaint must be on or off");
        k.inpaint = s == "on";
      } else {
        k.inpaint = v.get<bool>();
      }
    } else if (key == "keep_sh_rest") {
      k.keep_sh_rest = v.get<bool>();
    } else if (key == "up_axis" || key == "up") {
      k.up = up_from(v);
    } else if (key == "margin_ratio") {
      k.margin_ratio = v.get<double>();
    } else {
      throw InvalidArgumentError("unknown knob '" + raw + "'");
    }
  }
  return k;
}

json grounded_json(const GroundedEdit& g) { return json::parse(to_json(g, -1)); }

void mark_cache_hit(GroundedEdit& g) {
  g.primary.trace.cache_hit = true;
  if (g.reference) g.reference->trace.cache_hit = true;
}

void rethrow_staged(Stage stage) {
  try {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const NoMatchError& e) {
    throw StageError(stage, e, to_json(e.trace(), -1));
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const json::exception& e) {
    throw StageError(stage, InvalidArgumentError(e.what()));
  }
}

}  // namespace

// ---- config JSON -----------------------------------------------------------------

std::string to_json(const SessionConfig& c, int indent) {
  json j{{"version", 1},
         {"session_id", c.session_id},
         {"min_confidence", c.min_confidence},
         {"knobs", knobs_json(c.knobs)},
         {"scorer_url", c.scorer_url},
         {"assets_dir", c.assets_dir.string()}};
  return j.dump(indent);
}

SessionConfig session_config_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    SessionConfig c;
    c.session_id = j.value("session_id", "");
    c.min_confidence = j.value("min_confidence", kDefaultMinConfidence);
    if (j.contains("knobs")) c.knobs = apply_knobs(j.at("knobs"), {});
    c.scorer_url = j.value("scorer_url", "");
    c.assets_dir = j.value("assets_dir", std::string("assets"));
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
}

EditKnobs knobs_from_json(std::string_view text, EditKnobs base) {
  try {
    return apply_knobs(json::parse(text), base);
  } catch (const json::exception& e) {
    throw InvalidArgumentError(std::string("knobs: ") + e.what());
  }
}

std::string to_json(const EditKnobs& knobs, int indent) { return knobs_json(knobs).dump(indent); }

std::string to_json(const EditTimings& t, int indent) {
  json j{{"parse_ms", t.parse_ms},         {"ground_ms", t.ground_ms},
         {"edit_ms", t.edit_ms},           {"total_ms", t.total_ms},
         {"scorer_calls", t.scorer_calls}, {"predicate_evals", t.predicate_evaluations},
         {"cache_hit", t.cache_hit}};
  return j.dump(indent);
}

// ---- session -------------------------------------------------------------------

struct Session::Caches {
  mutable std::mutex mu;
  // key -> (overlay version, grounding)
  std::map<std::string, std::pair<std::uint64_t, GroundedEdit>> grounding;
  std::shared_ptr<const InstanceCatalog> catalog;
  std::uint64_t catalog_version = std::numeric_limits<std::uint64_t>::max();
  std::deque<std::pair<std::uint64_t, std::shared_ptr<const KdIndex>>> indices;
};

Session::Session(Session&&) noexcept = default;
Session& Session::operator=(Session&&) noexcept = default;
Session::~Session() = default;

Session Session::in_memory(GaussianScene scene, SemanticOverlay overlay, SessionConfig config) {
  overlay.validate(scene.size());
  Session s;
  s.config_ = std::move(config);
  if (s.config_.session_id.empty()) s.config_.session_id = random_session_id();
  s.scene_ = std::move(scene);
  s.overlay_ = std::move(overlay);
  s.caches_ = std::make_unique<Caches>();
  return s;
}

Session Session::import(const fs::path& ply, const fs::path& labels_json, const fs::path& labels_bin,
                        const fs::path& dir, SessionConfig config, LogFn log) {
  const auto t0 = Clock::now();
  GaussianScene scene = load_ply(ply);
  const double load_ms = ms_since(t0);
  const auto t1 = Clock::now();
  SemanticOverlay overlay = load_labels(scene, labels_json, labels_bin, config.min_confidence);
  const double labels_ms = ms_since(t1);

  Session s = in_memory(std::move(scene), std::move(overlay), std::move(config));
  s.dir_ = dir;
  fs::create_directories(dir);
  const auto t2 = Clock::now();
  s.catalog();
  const double catalog_ms = ms_since(t2);
  const auto t3 = Clock::now();
  s.save();
  const double persist_ms = ms_since(t3);

  json line{{"phase", "initial"},
            {"load_ms", load_ms},
            {"labels_ms", labels_ms},
            {"catalog_ms", catalog_ms},
            {"persist_ms", persist_ms},
            {"total_ms", ms_since(t0)},
            {"splat_count", s.scene_.size()},
            {"instance_count", s.overlay_.instances.size()}};
  s.append_timing(line.dump());
  if (log) {
    log("imported " + std::to_string(s.scene_.size()) + " splats, " + std::to_string(s.overlay_.instances.size()) +
        " instances (min confidence " + std::to_string(s.config_.min_confidence) + ")");
  }
  return s;
}

Session Session::open(const fs::path& dir, LogFn log) {
  if (!fs::is_directory(dir)) throw IoError("no session at " + dir.string());
  const auto cfg_text = read_text(dir / kConfigFile);
  SessionConfig config = session_config_from_json(cfg_text);
  GaussianScene scene = load_ply(dir / kSceneFile);
  // Persisted labels were filtered at import; keep every stored instance.
  SemanticOverlay overlay = load_labels(scene, dir / kLabelsJson, dir / kLabelsBin, 0.0);
  Session s = in_memory(std::move(scene), std::move(overlay), std::move(config));
  s.dir_ = dir;
  s.journal_ = read_journal(dir / kJournalFile);

  try {
    const auto state = json::parse(cfg_text).value("state", json::object());
    s.overlay_version_ = state.value("overlay_version", std::uint64_t{0});
    s.geometry_version_ = state.value("geometry_version", std::uint64_t{0});
    s.version_counter_ = state.value("version_counter", std::uint64_t{0});
    s.next_journal_id_ = state.value("next_journal_id", std::uint64_t{1});
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json state: ") + e.what());
  }
  if (!s.journal_.empty()) s.next_journal_id_ = std::max(s.next_journal_id_, s.journal_.back().id + 1);
  s.load_caches(log);
  return s;
}

void Session::load_caches(const LogFn& log) {
  const auto catalog_path = dir_ / kCatalogFile;
  bool hit = false;
  if (fs::exists(catalog_path)) {
    try {
      const auto j = json::parse(read_text(catalog_path));
      if (j.at("overlay_version").get<std::uint64_t>() == overlay_version_ &&
          j.at("splat_count").get<std::size_t>() == scene_.size()) {
        caches_->catalog = std::make_shared<InstanceCatalog>(catalog_from_json(j.at("catalog").dump()));
        caches_->catalog_version = overlay_version_;
        hit = true;
      }
    } catch (const std::exception&) {
      // A damaged cache is rebuilt on demand.
    }
  }
  if (log) {
    log(hit ? "semantic cache hit: reusing instance catalog for overlay version " + std::to_string(overlay_version_)
            : "semantic cache miss: instance catalog will be rebuilt");
  }

  const auto grounding_path = dir_ / kGroundingCacheFile;
  if (fs::exists(grounding_path)) {
    try {
      const auto j = json::parse(read_text(grounding_path));
      for (const auto& e : j.at("entries")) {
        caches_->grounding.emplace(e.at("key").get<std::string>(),
                                   std::make_pair(e.at("overlay_version").get<std::uint64_t>(),
                                                  grounded_edit_from_json(e.at("grounding").dump())));
      }
    } catch (const std::exception&) {
      caches_->grounding.clear();
    }
  }
  prune_caches();
}

void Session::save_caches() const {
  if (dir_.empty()) return;
  json state{{"overlay_version", overlay_version_},
             {"geometry_version", geometry_version_},
             {"version_counter", version_counter_},
             {"next_journal_id", next_journal_id_}};
  auto cfg = json::parse(to_json(config_, -1));
  cfg["state"] = state;
  write_file_atomic(dir_ / kConfigFile, cfg.dump(2) + "\n");

  const auto cat = catalog();
  json cj{{"overlay_version", overlay_version_},
          {"splat_count", scene_.size()},
          {"catalog", json::parse(to_json(*cat, -1))}};
  write_file_atomic(dir_ / kCatalogFile, cj.dump());

  json entries = json::array();
  {
    std::lock_guard lock(caches_->mu);
    for (const auto& [key, v] : caches_->grounding) {
      entries.push_back({{"key", key}, {"overlay_version", v.first}, {"grounding", grounded_json(v.second)}});
    }
  }
  write_file_atomic(dir_ / kGroundingCacheFile, json{{"entries", entries}}.dump());
}

void Session::save() const {
  if (dir_.empty()) return;
  save_ply(scene_, dir_ / kSceneFile);
  save_labels(overlay_, dir_ / kLabelsJson, dir_ / kLabelsBin);
  write_journal(dir_ / kJournalFile, journal_);
  save_caches();
}

void Session::append_timing(const std::string& line) const {
  if (dir_.empty()) return;
  std::ofstream out(dir_ / kTimingsFile, std::ios::app);
  out << line << '\n';
}

std::size_t Session::grounding_cache_size() const {
  std::lock_guard lock(caches_->mu);
  return caches_->grounding.size();
}

void Session::set_scorer(std::shared_ptr<Scorer> scorer) { scorer_ = std::move(scorer); }

Scorer& Session::scorer() {
  if (!scorer_) {
    scorer_ = make_scorer(config_.scorer_url, [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
  }
  return *scorer_;
}

std::shared_ptr<const InstanceCatalog> Session::catalog() const {
  std::lock_guard lock(caches_->mu);
  if (!caches_->catalog || caches_->catalog_version != overlay_version_) {
    caches_->catalog = std::make_shared<InstanceCatalog>(InstanceCatalog::build(scene_, overlay_));
    caches_->catalog_version = overlay_version_;
  }
  return caches_->catalog;
}

std::shared_ptr<const KdIndex> Session::index() const {
  {
    std::lock_guard lock(caches_->mu);
    for (const auto& [v, idx] : caches_->indices) {
      if (v == geometry_version_) return idx;
    }
  }
  auto idx = std::make_shared<KdIndex>(KdIndex::build(scene_));
  std::lock_guard lock(caches_->mu);
  caches_->indices.emplace_back(geometry_version_, idx);
  while (caches_->indices.size() > kIndexCacheSlots) caches_->indices.pop_front();
  return idx;
}

std::string Session::cache_key(std::string_view prompt, const EditKnobs& knobs) const {
  std::ostringstream key;
  key.precision(17);
  key << normalize_prompt(prompt) << "|up=" << knobs.up.x() << "," << knobs.up.y() << "," << knobs.up.z()
      << "|margin=" << knobs.margin_ratio << "|v=" << overlay_version_;
  return key.str();
}

void Session::prune_caches() {
  std::set<std::uint64_t> live{overlay_version_};
  for (const auto& e : journal_) live.insert(e.prior_overlay_version);
  std::lock_guard lock(caches_->mu);
  std::erase_if(caches_->grounding, [&](const auto& kv) { return !live.count(kv.second.first); });
}

GroundedEdit Session::ground(std::string_view prompt, const std::optional<EditKnobs>& knobs, bool* cache_hit) {
  const EditKnobs k = knobs.value_or(config_.knobs);
  EditCommand cmd;
  try {
    cmd = parse_prompt(prompt);
  } catch (...) {
    rethrow_staged(Stage::Parser);
  }
  const std::string key = cache_key(prompt, k);
  {
    std::lock_guard lock(caches_->mu);
    auto it = caches_->grounding.find(key);
    if (it != caches_->grounding.end() && it->second.second.command == cmd) {
      GroundedEdit g = it->second.second;
      mark_cache_hit(g);
      if (cache_hit) *cache_hit = true;
      return g;
    }
  }
  if (cache_hit) *cache_hit = false;
  GroundedEdit g;
  try {
    const auto cat = catalog();
    Scorer& sc = scorer();
    PreviewProvider preview;
    if (sc.wants_preview()) {
      preview = [this, up = k.up](InstanceId id) {
        ViewParams v;
        v.azimuth_deg = 45.0;
        v.elevation_deg = 30.0;
        v.width = v.height = 224;
        v.up = up;
        return encode_png(render_preview(scene_, overlay_, v, id));
      };
    }
    g = ground_edit(*cat, cmd, prompt, sc, k.grounding(), preview);
  } catch (...) {
    rethrow_staged(Stage::Grounding);
  }
  std::lock_guard lock(caches_->mu);
  caches_->grounding.insert_or_assign(key, std::make_pair(overlay_version_, g));
  return g;
}

EditOutcome Session::edit(std::string_view prompt, const std::optional<EditKnobs>& knobs) {
  const auto t_total = Clock::now();
  const EditKnobs k = knobs.value_or(config_.knobs);
  try {
    validate(k);
  } catch (...) {
    rethrow_staged(Stage::Session);
  }

  EditOutcome out;
  const auto t_parse = Clock::now();
  EditCommand cmd;
  try {
    cmd = parse_prompt(prompt);
  } catch (...) {
    rethrow_staged(Stage::Parser);
  }
  out.timings.parse_ms = ms_since(t_parse);

  const auto t_ground = Clock::now();
  bool hit = false;
  out.grounded = ground(prompt, k, &hit);
  out.timings.ground_ms = ms_since(t_ground);
  out.timings.cache_hit = hit;
  if (!hit) {
    out.timings.scorer_calls = out.grounded.scorer_calls();
    out.timings.predicate_evaluations = out.grounded.predicate_evaluations();
  }

  const auto t_edit = Clock::now();
  JournalEntry entry;
  try {
    std::optional<AssetGaussians> asset;
    if (cmd.op == OperationKind::Add || cmd.op == OperationKind::Replace) {
      const std::string name = cmd.asset_ref.value_or("");
      asset = load_asset(find_asset(config_.assets_dir, name), name);
    }
    const auto idx = index();
    entry = apply_edit(scene_, overlay_, out.grounded, k, asset ? &*asset : nullptr, std::string(prompt),
                       idx.get());
  } catch (...) {
    rethrow_staged(Stage::Editor);
  }
  entry.id = next_journal_id_++;
  entry.prior_overlay_version = overlay_version_;
  entry.prior_geometry_version = geometry_version_;
  overlay_version_ = ++version_counter_;
  if (entry.geometry_changed) geometry_version_ = ++version_counter_;
  out.journal_id = entry.id;
  out.affected = entry.affected_count();
  out.added = entry.added_count();
  journal_.push_back(std::move(entry));
  prune_caches();
  out.timings.edit_ms = ms_since(t_edit);
  out.timings.total_ms = ms_since(t_total);

  auto line = json::parse(to_json(out.timings));
  line["phase"] = hit ? "secondary" : "edit";
  line["journal_id"] = out.journal_id;
  line["prompt"] = std::string(prompt);
  line["splat_count"] = scene_.size();
  append_timing(line.dump());
  return out;
}

void Session::undo() {
  if (journal_.empty()) throw NothingToUndoError();
  const JournalEntry& entry = journal_.back();
  revert(entry, scene_, overlay_);
  overlay_version_ = entry.prior_overlay_version;
  geometry_version_ = entry.prior_geometry_version;
  journal_.pop_back();
  prune_caches();
}

PreviewImage Session::preview(const ViewParams& view, std::optional<InstanceId> crop) const {
  return render_preview(scene_, overlay_, view, crop);
}

std::string Session::history_json(int indent) const {
  json arr = json::array();
  for (const auto& e : journal_) {
    arr.push_back({{"id", e.id},
                   {"op", std::string(to_string(e.op))},
                   {"prompt", e.prompt},
                   {"timestamp_ms", e.timestamp_ms},
                   {"affected", e.affected_count()},
                   {"added", e.added_count()}});
  }
  return arr.dump(indent);
}

std::string Session::meta_json(int indent) const {
  const auto cat = catalog();
  json instances = json::array();
  for (const auto& r : overlay_.instances) {
    json item{{"id", r.id}, {"class", r.class_name}, {"confidence", r.confidence}};
    if (const Candidate* c = cat->find(r.id)) {
      item["member_count"] = c->member_count;
      item["aabb"] = {{"min", {c->aabb.min.x(), c->aabb.min.y(), c->aabb.min.z()}},
                      {"max", {c->aabb.max.x(), c->aabb.max.y(), c->aabb.max.z()}}};
    } else {
      item["member_count"] = 0;
      item["aabb"] = nullptr;
    }
    instances.push_back(std::move(item));
  }
  const Aabb& b = scene_.bounds();
  json bounds = b.empty() ? json(nullptr)
                          : json{{"min", {b.min.x(), b.min.y(), b.min.z()}}, {"max", {b.max.x(), b.max.y(), b.max.z()}}};
  json j{{"session_id", config_.session_id},
         {"splat_count", scene_.size()},
         {"bounds", bounds},
         {"instances", instances},
         {"overlay_version", overlay_version_},
         {"journal_length", journal_.size()}};
  return j.dump(indent);
}

}  // namespace splatedit
