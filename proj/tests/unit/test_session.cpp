#include <atomic>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "splatedit/errors.hpp"
#include "splatedit/scorer.hpp"
#include "splatedit/session.hpp"
#include "fixtures.hpp"

using namespace splatedit;
using json = nlohmann::json;

namespace {

class CountingScorer final : public Scorer {
 public:
  double score(const ScoringContext& c) override {
    ++calls;
    return inner.score(c);
  }
  std::string name() const override { return "counting"; }

  std::atomic<std::size_t> calls{0};
  LexicalScorer inner;
};

struct Imported {
  fixtures::TempDir tmp;
  fixtures::Room room = fixtures::make_room();
  std::vector<std::string> log;

  std::filesystem::path session_dir() const { return tmp / "session"; }

  Session import(SessionConfig cfg = {}) {
    room.builder.write(tmp / "in");
    cfg.assets_dir = tmp / "assets";
    return Session::import(tmp / "in" / "scene.ply", tmp / "in" / "labels.json", tmp / "in" / "labels.bin",
                           session_dir(), cfg, [this](const std::string& m) { log.push_back(m); });
  }

  Session open() {
    return Session::open(session_dir(), [this](const std::string& m) { log.push_back(m); });
  }

  bool logged(const std::string& needle) const {
    for (const auto& m : log) {
      if (m.find(needle) != std::string::npos) return true;
    }
    return false;
  }
};

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

Stage stage_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const StageError& e) {
    return e.stage();
  }
  ADD_FAILURE() << "expected a StageError";
  return Stage::Session;
}

}  // namespace

TEST(Session, ImportThenOpenRestoresSceneAndLabels) {
  Imported t;
  Session a = t.import();
  for (const char* f : {"scene.ply", "labels.json", "labels.bin", "config.json", "journal.bin", "catalog.json",
                        "timings.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(t.session_dir() / f)) << f;
  }
  Session b = t.open();
  EXPECT_EQ(serialize_ply(b.scene().splats()), serialize_ply(t.room.builder.scene().splats()));
  EXPECT_EQ(b.overlay(), t.room.builder.overlay());
  EXPECT_EQ(b.config().session_id, a.config().session_id);
  EXPECT_TRUE(b.journal().empty());
}

TEST(Session, MinConfidenceFiltersAtImport) {
  for (double threshold : {0.8, 0.3}) {
    fixtures::TempDir tmp;
    fixtures::SceneBuilder b;
    b.add_box_at("table", {0, 0, 0.5}, {1, 1, 1});
    const auto vase = b.add_box("vase", Aabb{{2, 0, 0}, {2.2, 0.2, 0.4}}, {0.5, 0.5, 0.5}, 3, 0.5);
    b.write(tmp / "in");
    SessionConfig cfg;
    cfg.min_confidence = threshold;
    Session s = Session::import(tmp / "in" / "scene.ply", tmp / "in" / "labels.json", tmp / "in" / "labels.bin",
                                tmp / "s", cfg);
    const bool kept = threshold < 0.5;
    EXPECT_EQ(s.overlay().contains(vase), kept) << threshold;
    EXPECT_EQ(s.overlay().member_count(vase), kept ? 27u : 0u) << threshold;
    // Filtering happens once: reopening keeps the imported instance table.
    Session r = Session::open(tmp / "s");
    EXPECT_EQ(r.overlay(), s.overlay());
    EXPECT_EQ(r.config().min_confidence, threshold);
  }
}

TEST(Session, OpenReusesThePersistedCatalog) {
  Imported t;
  { Session s = t.import(); }
  t.log.clear();
  Session s = t.open();
  EXPECT_TRUE(t.logged("semantic cache hit"));

  // A stale catalog is reported as a miss.
  s.set_scorer(std::make_shared<LexicalScorer>());
  s.edit("remove the lamp");
  s.save();
  std::filesystem::remove(t.session_dir() / "catalog.json");
  t.log.clear();
  Session again = t.open();
  EXPECT_TRUE(t.logged("semantic cache miss"));
}

TEST(Session, UndoThenRepeatIsACacheHitWithoutScoring) {
  Imported t;
  Session s = t.import();
  auto scorer = std::make_shared<CountingScorer>();
  s.set_scorer(scorer);
  const auto v0 = s.overlay_version();
  const auto first = s.edit("remove the black chair");
  EXPECT_FALSE(first.timings.cache_hit);
  EXPECT_GT(first.timings.scorer_calls, 0u);
  const std::size_t calls = scorer->calls;
  EXPECT_EQ(first.timings.scorer_calls, calls);
  EXPECT_NE(s.overlay_version(), v0);

  s.undo();
  EXPECT_EQ(s.overlay_version(), v0);
  const auto again = s.edit("remove the black chair");
  EXPECT_TRUE(again.timings.cache_hit);
  EXPECT_EQ(again.timings.scorer_calls, 0u);
  EXPECT_EQ(scorer->calls, calls);
  EXPECT_EQ(again.grounded.primary.winner.id, first.grounded.primary.winner.id);
  EXPECT_TRUE(again.grounded.primary.trace.cache_hit);
}

TEST(Session, CacheSurvivesReopen) {
  Imported t;
  {
    Session s = t.import();
    s.set_scorer(std::make_shared<LexicalScorer>());
    s.ground("remove the lamp");
    s.save_caches();
  }
  Session s = t.open();
  auto scorer = std::make_shared<CountingScorer>();
  s.set_scorer(scorer);
  bool hit = false;
  s.ground("  Remove the LAMP ", std::nullopt, &hit);
  EXPECT_TRUE(hit);
  EXPECT_EQ(scorer->calls, 0u);
}

TEST(Session, EditsInvalidateGroundingForNewState) {
  Imported t;
  Session s = t.import();
  auto scorer = std::make_shared<CountingScorer>();
  s.set_scorer(scorer);
  bool hit = true;
  s.ground("remove the lamp", std::nullopt, &hit);
  EXPECT_FALSE(hit);
  s.edit("change the table to red");
  s.ground("remove the lamp", std::nullopt, &hit);
  EXPECT_FALSE(hit);
  s.ground("remove the lamp", std::nullopt, &hit);
  EXPECT_TRUE(hit);
}

TEST(Session, GroundNeverMutates) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  const auto before = s.scene().splats();
  const auto overlay = s.overlay();
  const auto g = s.ground("remove the stool to the left of the table");
  EXPECT_EQ(g.primary.winner.id, t.room.left_stool);
  EXPECT_EQ(s.scene().splats(), before);
  EXPECT_EQ(s.overlay(), overlay);
  EXPECT_TRUE(s.journal().empty());
}

TEST(Session, ErrorsCarryTheirStage) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  EXPECT_EQ(stage_of([&] { s.edit("paint the chair"); }), Stage::Parser);
  EXPECT_EQ(stage_of([&] { s.edit("remove the chair and change the table to red"); }), Stage::Parser);
  EXPECT_EQ(stage_of([&] { s.edit("remove the sofa"); }), Stage::Grounding);
  EXPECT_EQ(stage_of([&] { s.edit("add a vase on the table"); }), Stage::Editor);
  EditKnobs bad;
  bad.knn_k = 0;
  EXPECT_EQ(stage_of([&] { s.edit("remove the lamp", bad); }), Stage::Session);
  EXPECT_TRUE(s.journal().empty());
  EXPECT_EQ(s.scene().size(), t.room.builder.scene().size());
}

TEST(Session, GroundingFailureCarriesTheTrace) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  try {
    s.edit("remove the lamp on the stool");
    FAIL() << "expected a grounding failure";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::Grounding);
    ASSERT_FALSE(e.trace_json().empty());
    const auto trace = json::parse(e.trace_json());
    ASSERT_TRUE(trace.contains("stages"));
    EXPECT_EQ(trace["stages"].back()["stage"], "relation-filter");
    EXPECT_TRUE(trace["stages"].back()["survivors"].empty());
  }
}

TEST(Session, UndoOnEmptyJournal) {
  Imported t;
  Session s = t.import();
  try {
    s.undo();
    FAIL() << "expected NothingToUndoError";
  } catch (const NothingToUndoError& e) {
    EXPECT_EQ(e.code(), "nothing_to_undo");
  }
}

TEST(Session, RemoveTheBlackChairEndToEnd) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  const auto n0 = s.scene().size();
  const auto chair = t.room.chairs.front();
  const auto members = s.overlay().member_count(chair);
  const auto out = s.edit("remove the black chair");
  EXPECT_EQ(out.grounded.primary.winner.id, chair);
  EXPECT_EQ(out.journal_id, 1u);
  EXPECT_EQ(s.overlay().member_count(chair), 0u);
  EXPECT_EQ(s.scene().size(), n0 - members + out.added);
  for (auto other : {t.room.office_chair, t.room.chairs[1]}) EXPECT_GT(s.overlay().member_count(other), 0u);
  s.save();

  Session r = t.open();
  EXPECT_EQ(serialize_ply(r.scene().splats()), serialize_ply(s.scene().splats()));
  EXPECT_EQ(r.overlay(), s.overlay());
  ASSERT_EQ(r.journal().size(), 1u);
  const auto history = json::parse(r.history_json());
  ASSERT_EQ(history.size(), 1u);
  EXPECT_EQ(history[0]["op"], "remove");
  EXPECT_EQ(history[0]["prompt"], "remove the black chair");

  r.undo();
  EXPECT_EQ(serialize_ply(r.scene().splats()), serialize_ply(t.room.builder.scene().splats()));
  EXPECT_EQ(r.overlay(), t.room.builder.overlay());
  r.save();
  Session z = t.open();
  EXPECT_TRUE(z.journal().empty());
  EXPECT_EQ(z.overlay_version(), 0u);
}

TEST(Session, VersionsTrackStatesNotCounts) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  const auto o0 = s.overlay_version(), g0 = s.geometry_version();
  s.edit("change the table to red");
  const auto o1 = s.overlay_version();
  EXPECT_NE(o1, o0);
  EXPECT_EQ(s.geometry_version(), g0);
  s.edit("remove the lamp");
  EXPECT_NE(s.overlay_version(), o1);
  EXPECT_NE(s.geometry_version(), g0);
  s.undo();
  EXPECT_EQ(s.overlay_version(), o1);
  EXPECT_EQ(s.geometry_version(), g0);
  s.undo();
  EXPECT_EQ(s.overlay_version(), o0);
  // A new edit from the original state gets a version never seen before.
  s.edit("remove the lamp");
  EXPECT_NE(s.overlay_version(), o1);
  EXPECT_NE(s.overlay_version(), o0);
}

TEST(Session, TimingsLogHasOneLinePerPhase) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  s.edit("remove the lamp");
  s.undo();
  s.edit("remove the lamp");
  const auto lines = read_jsonl(t.session_dir() / "timings.jsonl");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["phase"], "initial");
  EXPECT_EQ(lines[0]["splat_count"], t.room.builder.scene().size());
  EXPECT_EQ(lines[1]["phase"], "edit");
  EXPECT_EQ(lines[2]["phase"], "secondary");
  EXPECT_EQ(lines[2]["cache_hit"], true);
  EXPECT_EQ(lines[2]["scorer_calls"], 0);
  for (const auto& l : lines) EXPECT_GE(l["total_ms"].get<double>(), 0.0);
}

TEST(Session, AssetsComeFromTheConfiguredDirectory) {
  Imported t;
  Session s = t.import();
  s.set_scorer(std::make_shared<LexicalScorer>());
  save_ply(GaussianScene(fixtures::box_splats({0.2, 0.2, 0.3}, {0.9, 0.9, 0.9})), t.tmp / "vase.ply");
  register_asset(s.config().assets_dir, "vase", t.tmp / "vase.ply");
  const auto out = s.edit("add a vase on the table");
  EXPECT_EQ(out.added, 64u);
  const auto id = s.journal().back().added_instances.at(0);
  EXPECT_EQ(s.overlay().find(id)->class_name, "vase");
}

TEST(Session, InMemorySaveIsANoOp) {
  auto room = fixtures::make_room();
  Session s = Session::in_memory(room.builder.scene(), room.builder.overlay());
  s.set_scorer(std::make_shared<LexicalScorer>());
  s.edit("remove the lamp");
  EXPECT_NO_THROW(s.save());
  EXPECT_TRUE(s.directory().empty());
}

TEST(Session, MetaDescribesTheScene) {
  Imported t;
  Session s = t.import();
  const auto meta = json::parse(s.meta_json());
  EXPECT_EQ(meta["splat_count"], s.scene().size());
  EXPECT_EQ(meta["instances"].size(), s.overlay().instances.size());
  EXPECT_EQ(meta["journal_length"], 0);
  EXPECT_FALSE(meta["bounds"].is_null());
}

TEST(Knobs, FromJsonAcceptsBothSpellings) {
  const auto k = knobs_from_json(R"({"knn-k": 8, "inpaint": "off", "up_axis": "y", "step_ratio": 0.5})");
  EXPECT_EQ(k.knn_k, 8u);
  EXPECT_FALSE(k.inpaint);
  EXPECT_EQ(k.up, Vec3::UnitY());
  EXPECT_EQ(k.step_ratio, 0.5);
  EXPECT_EQ(k.kappa, 1.0);
  EXPECT_THROW(knobs_from_json(R"({"bogus": 1})"), InvalidArgumentError);
  EXPECT_THROW(knobs_from_json(R"({"inpaint": "maybe"})"), InvalidArgumentError);
  EXPECT_THROW(knobs_from_json("[1]"), InvalidArgumentError);
  const auto back = knobs_from_json(to_json(k));
  EXPECT_EQ(back.knn_k, k.knn_k);
  EXPECT_EQ(back.inpaint, k.inpaint);
  EXPECT_EQ(back.up, k.up);
}

TEST(Knobs, ConfigRoundTrip) {
  SessionConfig c;
  c.session_id = "abc";
  c.min_confidence = 0.3;
  c.knobs.kappa = 0.5;
  c.scorer_url = "http://127.0.0.1:1";
  const auto back = session_config_from_json(to_json(c));
  EXPECT_EQ(back.session_id, "abc");
  EXPECT_EQ(back.min_confidence, 0.3);
  EXPECT_EQ(back.knobs.kappa, 0.5);
  EXPECT_EQ(back.scorer_url, c.scorer_url);
  EXPECT_EQ(back.assets_dir, c.assets_dir);
}
