#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splatedit/grounding.hpp"
#include "splatedit/journal.hpp"
#include "splatedit/spatial_index.hpp"

namespace splatedit {

struct EditKnobs {
  std::size_t knn_k = kDefaultKnnK;
  double kappa = 1.0;            // add: asset size relative to the reference
  double step_ratio = 0.25;      // move: fraction of the centroid distance
  double max_move_ratio = 0.10;  // move: cap as a fraction of the scene diagonal
  bool inpaint = true;
  bool keep_sh_rest = false;
  Vec3 up = Vec3::UnitZ();
  double margin_ratio = 0.02;

  GroundingOptions grounding() const { return {up, margin_ratio}; }
};

/// Throws InvalidArgumentError when a knob is outside its domain.
void validate(const EditKnobs& knobs);

struct AssetGaussians {
  std::vector<GaussianSplat> splats;
  std::string name;
  Aabb native_aabb;

  static AssetGaussians from(std::vector<GaussianSplat> splats, std::string name);
};

Aabb aabb_of(std::span<const GaussianSplat> splats);
Vec3 centroid_of(std::span<const GaussianSplat> splats);

AssetGaussians load_asset(const std::filesystem::path& ply, std::string name);

/// `<assets_dir>/<name>/asset.ply`, trying the name as given, then with
/// spaces replaced by '_' and by '-'. Throws AssetNotFoundError.
std::filesystem::path find_asset(const std::filesystem::path& assets_dir, std::string_view name);

/// Validates `ply` and copies it to `<assets_dir>/<name>/asset.ply`.
std::filesystem::path register_asset(const std::filesystem::path& assets_dir, std::string_view name,
                                     const std::filesystem::path& ply);

/// Positions scaled by `s` about the centroid, log_scale shifted by ln(s).
AssetGaussians scale_asset(const AssetGaussians& asset, double s);

/// Indices of the Gaussians assigned to `id`, ascending.
std::vector<std::uint32_t> members_of(const SemanticOverlay& overlay, InstanceId id);

// ---- primitive operations ------------------------------------------------------
// Each records its mutations in `tx`. Instance geometry is read from the
// transaction's current scene and overlay.

/// Majority-vote relabel of the Gaussians inside `roi`; returns how many changed.
std::size_t relabel_step(Transaction& tx, const Aabb& roi, std::size_t k, const KdIndex* index = nullptr);

/// Deletes every Gaussian of `id` and its instance record. With `inpaint`,
/// appends unlabeled background Gaussians fitted to the surrounding surface.
/// Returns the number of Gaussians appended.
std::size_t remove_object(Transaction& tx, InstanceId id, bool inpaint, std::size_t k = kDefaultKnnK);

void recolor_object(Transaction& tx, InstanceId id, const Rgb& color, bool keep_sh_rest = false);

/// Places the asset against `references` under `relation` in `view`'s frame
/// and returns the new instance id.
InstanceId add_object(Transaction& tx, const AssetGaussians& asset, std::span<const InstanceId> references,
                      Relation relation, const EgocentricView& view, double kappa = 1.0);

/// Translates `target` toward (Close) or away from (FarAway) `reference`.
/// Returns the applied translation.
Vec3 move_object(Transaction& tx, InstanceId target, InstanceId reference, Relation relation, double step_ratio,
                 double max_ratio, std::optional<double> distance = std::nullopt);

/// Removes `target` and fits the asset to its footprint. Returns the new id.
InstanceId replace_object(Transaction& tx, InstanceId target, const AssetGaussians& asset, const Vec3& up);

// ---- pipeline ----------------------------------------------------------------

/// Everything grounding decides for one command.
struct GroundedEdit {
  EditCommand command;
  GroundingResult primary;                   // the target; for add, the reference
  std::optional<GroundingResult> reference;  // move: the instance to move relative to
  std::vector<InstanceId> placement;         // add: instances the asset is placed against
  std::optional<EgocentricView> view;        // add: placement frame

  std::size_t scorer_calls() const;
  std::size_t predicate_evaluations() const;
};

GroundedEdit ground_edit(const InstanceCatalog& catalog, const EditCommand& command, std::string_view prompt,
                         Scorer& scorer, const GroundingOptions& options = {},
                         const PreviewProvider& preview = {});

/// relabel -> operation -> inpaint, as one journal entry. On failure every
/// mutation is rolled back before the error propagates. `index`, when given,
/// must be built over all of `scene`.
JournalEntry apply_edit(GaussianScene& scene, SemanticOverlay& overlay, const GroundedEdit& grounded,
                        const EditKnobs& knobs, const AssetGaussians* asset = nullptr,
                        std::string prompt = {}, const KdIndex* index = nullptr);

std::string to_json(const GroundedEdit& grounded, int indent = 2);
GroundedEdit grounded_edit_from_json(std::string_view text);

}  // namespace splatedit
