#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splatedit/editor.hpp"
#include "splatedit/preview.hpp"

namespace splatedit {

struct SessionConfig {
  std::string session_id;
  double min_confidence = kDefaultMinConfidence;
  EditKnobs knobs;
  std::string scorer_url;  // empty: $SPLATEDIT_SCORER_URL or the lexical scorer
  std::filesystem::path assets_dir = "assets";
};

std::string to_json(const SessionConfig& config, int indent = 2);
SessionConfig session_config_from_json(std::string_view text);

/// Applies the fields present in a JSON object (CLI flag names with '_' or
/// '-') on top of `base`.
EditKnobs knobs_from_json(std::string_view text, EditKnobs base = {});
std::string to_json(const EditKnobs& knobs, int indent = -1);

struct EditTimings {
  double parse_ms = 0.0;
  double ground_ms = 0.0;
  double edit_ms = 0.0;
  double total_ms = 0.0;
  std::size_t scorer_calls = 0;
  std::size_t predicate_evaluations = 0;
  bool cache_hit = false;
};

std::string to_json(const EditTimings& timings, int indent = -1);

struct EditOutcome {
  std::uint64_t journal_id = 0;
  GroundedEdit grounded;
  EditTimings timings;
  std::size_t affected = 0;
  std::size_t added = 0;
};

/// One scene under edit: scene, overlay, journal, caches and persistence.
///
/// overlay_version and geometry_version identify states rather than count
/// changes: every edit moves to a fresh version and undo returns to the
/// version the edit started from, so cache entries made before an edit are
/// valid again after it is undone.
///
/// Not internally synchronized for mutation; `ground` and `preview` may run
/// concurrently with each other (their caches are guarded) but not with
/// `edit` or `undo`.
class Session {
 public:
  using LogFn = std::function<void(const std::string&)>;

  /// Directory layout: scene.ply, labels.json, labels.bin, config.json,
  /// journal.bin, plus catalog.json, grounding_cache.json and timings.jsonl.
  static Session import(const std::filesystem::path& ply, const std::filesystem::path& labels_json,
                        const std::filesystem::path& labels_bin, const std::filesystem::path& dir,
                        SessionConfig config = {}, LogFn log = {});
  static Session open(const std::filesystem::path& dir, LogFn log = {});
  /// A session with no backing directory; `save` is a no-op.
  static Session in_memory(GaussianScene scene, SemanticOverlay overlay, SessionConfig config = {});

  Session(Session&&) noexcept;
  Session& operator=(Session&&) noexcept;
  ~Session();

  /// parse -> ground (cached) -> edit -> journal. Errors are StageError.
  /// `knobs` defaults to the session config.
  EditOutcome edit(std::string_view prompt, const std::optional<EditKnobs>& knobs = std::nullopt);

  /// Grounding only; never mutates scene, overlay or journal.
  GroundedEdit ground(std::string_view prompt, const std::optional<EditKnobs>& knobs = std::nullopt,
                      bool* cache_hit = nullptr);

  /// Reverts the last journal entry. Throws NothingToUndoError.
  void undo();

  PreviewImage preview(const ViewParams& view, std::optional<InstanceId> crop = std::nullopt) const;

  /// Writes every session file.
  void save() const;
  /// Writes only config and caches (after a read-only command).
  void save_caches() const;

  const GaussianScene& scene() const noexcept { return scene_; }
  const SemanticOverlay& overlay() const noexcept { return overlay_; }
  const std::vector<JournalEntry>& journal() const noexcept { return journal_; }
  const SessionConfig& config() const noexcept { return config_; }
  SessionConfig& config() noexcept { return config_; }
  const std::filesystem::path& directory() const noexcept { return dir_; }
  std::uint64_t overlay_version() const noexcept { return overlay_version_; }
  std::uint64_t geometry_version() const noexcept { return geometry_version_; }
  std::size_t grounding_cache_size() const;

  /// The scorer used by edit/ground: set explicitly, else from the config.
  void set_scorer(std::shared_ptr<Scorer> scorer);
  Scorer& scorer();

  /// Instance summaries for the current overlay version.
  std::shared_ptr<const InstanceCatalog> catalog() const;
  /// k-d tree over the current scene, cached per geometry version.
  std::shared_ptr<const KdIndex> index() const;

  /// JSON array of {id, op, prompt, timestamp_ms, affected, added}.
  std::string history_json(int indent = 2) const;
  /// {splat_count, bounds, instances[], overlay_version, journal_length}.
  std::string meta_json(int indent = 2) const;

 private:
  Session() = default;
  struct Caches;

  std::string cache_key(std::string_view prompt, const EditKnobs& knobs) const;
  void prune_caches();
  void append_timing(const std::string& json_line) const;
  void load_caches(const LogFn& log);

  std::filesystem::path dir_;
  SessionConfig config_;
  GaussianScene scene_;
  SemanticOverlay overlay_;
  std::vector<JournalEntry> journal_;
  std::uint64_t overlay_version_ = 0;
  std::uint64_t geometry_version_ = 0;
  std::uint64_t version_counter_ = 0;  // last version handed out
  std::uint64_t next_journal_id_ = 1;
  std::shared_ptr<Scorer> scorer_;
  std::unique_ptr<Caches> caches_;
};

}  // namespace splatedit
