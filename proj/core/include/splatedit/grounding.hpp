#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splatedit/color_table.hpp"
#include "splatedit/errors.hpp"
#include "splatedit/prompt_parser.hpp"
#include "splatedit/splat_model.hpp"

namespace splatedit {

/// One labeled instance as seen by the grounding pipeline.
struct Candidate {
  InstanceId id = 0;
  std::string class_name;
  Aabb aabb;
  Vec3 centroid = Vec3::Zero();     // mean member center
  Rgb mean_color = Rgb::Zero();     // mean of clamp(sh_dc * C0 + 0.5)
  std::size_t member_count = 0;
  std::optional<double> score;
};

/// Per-instance summary of one scene+overlay snapshot, sorted by id.
/// Instances with no member Gaussians are omitted.
class InstanceCatalog {
 public:
  static InstanceCatalog build(const GaussianScene& scene, const SemanticOverlay& overlay);
  static InstanceCatalog from_parts(std::vector<Candidate> instances, Aabb scene_bounds);

  const std::vector<Candidate>& instances() const noexcept { return instances_; }
  const Candidate* find(InstanceId id) const;
  const Aabb& scene_bounds() const noexcept { return scene_bounds_; }

 private:
  std::vector<Candidate> instances_;
  Aabb scene_bounds_;
};

struct GroundingOptions {
  Vec3 up = Vec3::UnitZ();    // gravity axis
  double margin_ratio = 0.02; // predicate margin as a fraction of the scene diagonal
};

/// Orthographic viewer at the scene center looking toward the objects
/// involved in a query. (right, forward, screen_up) is a right-handed
/// orthonormal basis.
struct EgocentricView {
  Vec3 eye = Vec3::Zero();
  Vec3 forward = Vec3::UnitY();
  Vec3 up = Vec3::UnitZ();
  Vec3 right = Vec3::UnitX();
  Vec3 screen_up = Vec3::UnitZ();

  double sx(const Vec3& p) const { return (p - eye).dot(right); }
  double sy(const Vec3& p) const { return (p - eye).dot(screen_up); }
  double depth(const Vec3& p) const { return (p - eye).dot(forward); }
  double height(const Vec3& p) const { return p.dot(up); }
};

/// Tilt applied when the view direction is parallel to the gravity axis.
inline constexpr double kDegenerateTiltRadians = 1e-3;

EgocentricView build_egocentric_view(const Aabb& scene_bounds, std::span<const Candidate> candidates,
                                     std::span<const Candidate> references, const Vec3& up = Vec3::UnitZ());

struct TraceStage {
  std::string name;  // "class-filter", "relation-filter", "scorer"
  std::vector<InstanceId> survivors;
  std::string detail;
};

struct GroundingTrace {
  std::string prompt;
  std::vector<TraceStage> stages;
  std::vector<InstanceId> references;
  std::optional<EgocentricView> view;
  std::size_t scorer_calls = 0;
  std::size_t predicate_evaluations = 0;
  bool cache_hit = false;
};

struct GroundingResult {
  Candidate winner;
  std::vector<Candidate> ranked;  // score descending, ties by lower id
  Aabb roi;
  GroundingTrace trace;
};

/// Grounding found no instance; `stage()` names the filter that emptied the set.
class NoMatchError : public Error {
 public:
  NoMatchError(std::string stage, GroundingTrace trace);
  const std::string& stage() const noexcept { return stage_; }
  const GroundingTrace& trace() const noexcept { return trace_; }

 private:
  std::string stage_;
  GroundingTrace trace_;
};

// ---- scorer contract ----------------------------------------------------------

struct ScoringContext {
  std::string_view prompt;
  const ObjectDescriptor& target;
  Relation relation = Relation::None;
  bool relation_satisfied = false;
  const Candidate& candidate;
  std::string mean_color_name;
  Vec3 aabb_dims = Vec3::Zero();
  std::optional<std::vector<std::uint8_t>> preview_png;
};

/// Rates how well a candidate matches the prompt; higher is better. Scores
/// are only compared within one grounding call.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const ScoringContext& context) = 0;
  /// When true, grounding renders a PNG crop of each candidate for the scorer.
  virtual bool wants_preview() const { return false; }
  virtual std::string name() const = 0;
};

/// Renders a PNG crop around one instance.
using PreviewProvider = std::function<std::vector<std::uint8_t>(InstanceId)>;

// ---- pipeline stages ----------------------------------------------------------

/// Instances whose class tokens include every descriptor class token.
/// A color attribute does not filter; it only affects scoring.
std::vector<Candidate> find_candidates(const InstanceCatalog& catalog, const ObjectDescriptor& descriptor);

/// Union of the instances matching any reference descriptor, sorted by id.
std::vector<Candidate> find_references(const InstanceCatalog& catalog,
                                       std::span<const ObjectDescriptor> references);

/// Predicate evaluation margin: `margin_ratio` x scene diagonal.
double relation_margin(const Aabb& scene_bounds, double margin_ratio);

/// Keeps the candidates that satisfy `relation` against at least one
/// reference instance other than themselves (for Middle: against the set of
/// references). `evaluations`, if given, is incremented per predicate call.
std::vector<Candidate> apply_relation_filter(const EgocentricView& view, std::span<const Candidate> candidates,
                                             Relation relation, std::span<const Candidate> references,
                                             double margin, std::size_t* evaluations = nullptr);

/// Ranks survivors with `scorer`; winner is the argmax, ties to the lower id.
GroundingResult score_candidates(Scorer& scorer, std::string_view prompt, const ObjectDescriptor& target,
                                 Relation relation, std::vector<Candidate> survivors,
                                 GroundingTrace trace = {}, const PreviewProvider& preview = {});

/// What to ground for one command.
struct GroundingQuery {
  ObjectDescriptor target;
  Relation relation = Relation::None;
  std::vector<ObjectDescriptor> references;
};

/// The primary query of a command: the target with its relation for
/// remove/change/replace, the bare target for move (close/far away are the
/// motion, not a filter), and the first reference for add.
GroundingQuery primary_query(const EditCommand& command);

GroundingResult ground_query(const InstanceCatalog& catalog, std::string_view prompt, const GroundingQuery& query,
                             Scorer& scorer, const GroundingOptions& options = {},
                             const PreviewProvider& preview = {});

/// Full composition: catalog, class filter, relation filter (skipped when the
/// relation is None), scorer.
GroundingResult ground(const GaussianScene& scene, const SemanticOverlay& overlay, const EditCommand& command,
                       Scorer& scorer, const GroundingOptions& options = {}, std::string_view prompt = {});

std::string to_json(const GroundingResult& result, int indent = 2);
std::string to_json(const GroundingTrace& trace, int indent = 2);
GroundingResult grounding_result_from_json(std::string_view text);
std::string to_json(const InstanceCatalog& catalog, int indent = -1);
InstanceCatalog catalog_from_json(std::string_view text);

}  // namespace splatedit
