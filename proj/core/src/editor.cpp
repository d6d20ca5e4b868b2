#include "splatedit/editor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>
#include <json.hpp>

namespace splatedit {

namespace {

double support_max(const Aabb& b, const Vec3& u) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& c : b.corners()) m = std::max(m, c.dot(u));
  return m;
}

double support_min(const Aabb& b, const Vec3& u) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : b.corners()) m = std::min(m, c.dot(u));
  return m;
}

std::vector<GaussianSplat> translated(std::span<const GaussianSplat> splats, const Vec3& t) {
  std::vector<GaussianSplat> out(splats.begin(), splats.end());
  for (auto& s : out) s.set_center(s.center() + t);
  return out;
}

Vec3 members_centroid(const GaussianScene& scene, std::span<const std::uint32_t> members) {
  Vec3 sum = Vec3::Zero();
  for (std::uint32_t i : members) sum += scene[i].center();
  return sum / static_cast<double>(members.size());
}

std::vector<std::uint32_t> nonempty_members(const SemanticOverlay& overlay, InstanceId id) {
  if (!overlay.contains(id)) throw UnknownInstanceError(id);
  auto m = members_of(overlay, id);
  if (m.empty()) throw EmptyInstanceError(id);
  return m;
}

double scale_ratio(double wanted_edge, double asset_edge) {
  return asset_edge > 0.0 ? wanted_edge / asset_edge : 1.0;
}

bool is_placement(Relation r) {
  switch (r) {
    case Relation::Left:
    case Relation::Right:
    case Relation::Front:
    case Relation::Back:
    case Relation::On:
    case Relation::Above:
    case Relation::Middle: return true;
    default: return false;
  }
}

InstanceId append_asset(Transaction& tx, const std::vector<GaussianSplat>& splats, const std::string& name,
                        std::optional<InstanceId> fixed_id = std::nullopt) {
  const InstanceId id = fixed_id.value_or(tx.overlay().next_id());
  tx.add_instance({id, name, 1.0});
  tx.append(splats, id);
  return id;
}

nlohmann::json descriptor_json(const ObjectDescriptor& d) {
  return {{"class", d.class_name},
          {"color", d.color_attr ? nlohmann::json(*d.color_attr) : nlohmann::json(nullptr)},
          {"plural", d.plural}};
}

ObjectDescriptor descriptor_from(const nlohmann::json& j) {
  ObjectDescriptor d;
  d.class_name = j.at("class").get<std::string>();
  if (!j.at("color").is_null()) d.color_attr = j.at("color").get<std::string>();
  d.plural = j.at("plural").get<bool>();
  return d;
}

nlohmann::json command_json(const EditCommand& c) {
  nlohmann::json j;
  j["op"] = std::string(to_string(c.op));
  j["target"] = descriptor_json(c.target);
  j["relation"] = std::string(to_string(c.relation));
  j["references"] = nlohmann::json::array();
  for (const auto& r : c.references) j["references"].push_back(descriptor_json(r));
  j["color"] = c.color ? nlohmann::json::array({c.color->x(), c.color->y(), c.color->z()}) : nlohmann::json(nullptr);
  j["asset"] = c.asset_ref ? nlohmann::json(*c.asset_ref) : nlohmann::json(nullptr);
  j["magnitude"] = c.magnitude ? nlohmann::json(*c.magnitude) : nlohmann::json(nullptr);
  return j;
}

EditCommand command_from(const nlohmann::json& j) {
  EditCommand c;
  const auto op = operation_from_string(j.at("op").get<std::string>());
  const auto rel = relation_from_string(j.at("relation").get<std::string>());
  if (!op || !rel) throw FormatError("edit command JSON: bad op or relation");
  c.op = *op;
  c.relation = *rel;
  c.target = descriptor_from(j.at("target"));
  for (const auto& r : j.at("references")) c.references.push_back(descriptor_from(r));
  if (!j.at("color").is_null()) {
    const auto& v = j.at("color");
    c.color = Rgb(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
  }
  if (!j.at("asset").is_null()) c.asset_ref = j.at("asset").get<std::string>();
  if (!j.at("magnitude").is_null()) c.magnitude = j.at("magnitude").get<double>();
  return c;
}

nlohmann::json view_json(const EgocentricView& v) {
  auto vec = [](const Vec3& x) { return nlohmann::json::array({x.x(), x.y(), x.z()}); };
  return {{"eye", vec(v.eye)}, {"forward", vec(v.forward)}, {"up", vec(v.up)},
          {"right", vec(v.right)}, {"screen_up", vec(v.screen_up)}};
}

EgocentricView view_from(const nlohmann::json& j) {
  auto vec = [](const nlohmann::json& x) {
    return Vec3(x.at(0).get<double>(), x.at(1).get<double>(), x.at(2).get<double>());
  };
  return {vec(j.at("eye")), vec(j.at("forward")), vec(j.at("up")), vec(j.at("right")), vec(j.at("screen_up"))};
}

}  // namespace

void validate(const EditKnobs& k) {
  if (k.knn_k == 0) throw InvalidArgumentError("knn-k must be >= 1");
  if (!(k.kappa > 0.0) || !std::isfinite(k.kappa)) throw InvalidArgumentError("kappa must be > 0");
  if (!(k.step_ratio > 0.0 && k.step_ratio <= 1.0)) throw InvalidArgumentError("step-ratio must be in (0, 1]");
  if (!(k.max_move_ratio > 0.0) || !std::isfinite(k.max_move_ratio)) {
    throw InvalidArgumentError("max-move-ratio must be > 0");
  }
  if (!(k.margin_ratio >= 0.0)) throw InvalidArgumentError("margin ratio must be >= 0");
  if (!(std::abs(k.up.norm() - 1.0) < 1e-9)) throw InvalidArgumentError("up axis must be a unit vector");
}

Aabb aabb_of(std::span<const GaussianSplat> splats) {
  Aabb b;
  for (const auto& s : splats) b.expand(s.center());
  return b;
}

Vec3 centroid_of(std::span<const GaussianSplat> splats) {
  Vec3 sum = Vec3::Zero();
  for (const auto& s : splats) sum += s.center();
  return splats.empty() ? sum : Vec3(sum / static_cast<double>(splats.size()));
}

AssetGaussians AssetGaussians::from(std::vector<GaussianSplat> splats, std::string name) {
  if (splats.empty()) throw EmptyAssetError(name);
  AssetGaussians a;
  a.native_aabb = aabb_of(splats);
  a.splats = std::move(splats);
  a.name = std::move(name);
  return a;
}

AssetGaussians load_asset(const std::filesystem::path& ply, std::string name) {
  GaussianScene scene = load_ply(ply);
  return AssetGaussians::from(scene.splats(), std::move(name));
}

std::filesystem::path find_asset(const std::filesystem::path& assets_dir, std::string_view name) {
  std::string base(name);
  std::vector<std::string> variants{base};
  for (char sep : {'_', '-'}) {
    std::string v = base;
    std::replace(v.begin(), v.end(), ' ', sep);
    if (v != base) variants.push_back(v);
  }
  for (const auto& v : variants) {
    const auto p = assets_dir / v / "asset.ply";
    if (std::filesystem::is_regular_file(p)) return p;
  }
  throw AssetNotFoundError(base);
}

std::filesystem::path register_asset(const std::filesystem::path& assets_dir, std::string_view name,
                                     const std::filesystem::path& ply) {
  if (name.empty() || name.find('/') != std::string_view::npos || name == "." || name == "..") {
    throw InvalidArgumentError("invalid asset name '" + std::string(name) + "'");
  }
  const GaussianScene scene = load_ply(ply);
  if (scene.empty()) throw EmptyAssetError(std::string(name));
  const auto dir = assets_dir / std::string(name);
  std::filesystem::create_directories(dir);
  const auto dest = dir / "asset.ply";
  save_ply(scene, dest);
  return dest;
}

AssetGaussians scale_asset(const AssetGaussians& asset, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw InvalidScaleError(s);
  if (s == 1.0) return asset;
  AssetGaussians out = asset;
  const Vec3 c = centroid_of(asset.splats);
  const float ls = static_cast<float>(std::log(s));
  for (auto& g : out.splats) {
    g.set_center(c + s * (g.center() - c));
    for (auto& v : g.log_scale) v += ls;
  }
  out.native_aabb = aabb_of(out.splats);
  return out;
}

std::vector<std::uint32_t> members_of(const SemanticOverlay& overlay, InstanceId id) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < overlay.assignment.size(); ++i) {
    if (overlay.assignment[i] == id) out.push_back(static_cast<std::uint32_t>(i));
  }
  return out;
}

// ---- primitive operations ------------------------------------------------------

std::size_t relabel_step(Transaction& tx, const Aabb& roi, std::size_t k, const KdIndex* index) {
  const SemanticOverlay relabeled = relabel_roi(tx.scene(), tx.overlay(), roi, k, index);
  std::vector<std::uint32_t> changed;
  std::vector<InstanceId> labels;
  const auto& before = tx.overlay().assignment;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (relabeled.assignment[i] != before[i]) {
      changed.push_back(static_cast<std::uint32_t>(i));
      labels.push_back(relabeled.assignment[i]);
    }
  }
  tx.relabel(changed, labels);
  return changed.size();
}

std::size_t remove_object(Transaction& tx, InstanceId id, bool inpaint, std::size_t k) {
  auto members = nonempty_members(tx.overlay(), id);
  std::vector<GaussianSplat> removed;
  removed.reserve(members.size());
  for (std::uint32_t i : members) removed.push_back(tx.scene()[i]);
  tx.erase(std::move(members));

  std::vector<InstanceRecord> table;
  for (const auto& r : tx.overlay().instances) {
    if (r.id != id) table.push_back(r);
  }
  tx.set_instances(std::move(table));

  if (!inpaint) return 0;
  auto fill = inpaint_background(tx.scene(), tx.overlay(), removed, k);
  tx.append(fill.splats, kUnlabeled);
  return fill.splats.size();
}

void recolor_object(Transaction& tx, InstanceId id, const Rgb& color, bool keep_sh_rest) {
  if (!((color.array() >= 0.0).all() && (color.array() <= 1.0).all())) {
    throw InvalidArgumentError("recolor: color components must lie in [0, 1]");
  }
  const auto members = nonempty_members(tx.overlay(), id);
  std::array<float, 3> dc{};
  for (int c = 0; c < 3; ++c) dc[c] = static_cast<float>((color[c] - 0.5) / kShC0);
  std::vector<GaussianSplat> splats;
  std::vector<InstanceId> labels(members.size(), id);
  splats.reserve(members.size());
  for (std::uint32_t i : members) {
    GaussianSplat g = tx.scene()[i];
    g.sh_dc = dc;
    if (!keep_sh_rest) g.sh_rest.fill(0.0f);
    splats.push_back(g);
  }
  tx.modify(members, splats, labels);
}

InstanceId add_object(Transaction& tx, const AssetGaussians& asset, std::span<const InstanceId> references,
                      Relation relation, const EgocentricView& view, double kappa) {
  if (asset.splats.empty()) throw EmptyAssetError(asset.name);
  if (!is_placement(relation)) {
    throw UnsupportedRelationError("add does not support relation '" + std::string(to_string(relation)) + "'");
  }
  if (references.empty()) throw InvalidArgumentError("add needs at least one reference instance");
  if (!(kappa > 0.0)) throw InvalidScaleError(kappa);

  std::vector<Aabb> refs;
  for (InstanceId id : references) refs.push_back(instance_aabb(tx.scene(), tx.overlay(), id));

  double ref_edge = 0.0;
  if (relation == Relation::Middle) {
    for (const auto& b : refs) ref_edge += b.max_edge();
    ref_edge /= static_cast<double>(refs.size());
  } else {
    ref_edge = refs.front().max_edge();
  }
  const AssetGaussians scaled = scale_asset(asset, kappa * scale_ratio(ref_edge, asset.native_aabb.max_edge()));
  const Aabb box = aabb_of(scaled.splats);

  const Vec3 up = view.up.normalized();
  const Vec3 right = view.right.normalized();
  const Vec3 ahead = up.cross(right).normalized();  // horizontal forward
  const Aabb& ref = refs.front();
  auto center_gap = [&](const Vec3& u) { return ref.center().dot(u) - box.center().dot(u); };

  double a = 0.0, b = 0.0, c = 0.0;  // translation along right, ahead, up
  switch (relation) {
    case Relation::On:
    case Relation::Above:
      a = center_gap(right);
      b = center_gap(ahead);
      c = support_max(ref, up) - support_min(box, up);
      break;
    case Relation::Left:
    case Relation::Right:
      a = relation == Relation::Left ? support_min(ref, right) - support_max(box, right)
                                     : support_max(ref, right) - support_min(box, right);
      b = center_gap(ahead);
      c = support_min(ref, up) - support_min(box, up);
      break;
    case Relation::Front:
    case Relation::Back:
      a = center_gap(right);
      b = relation == Relation::Front ? support_min(ref, ahead) - support_max(box, ahead)
                                      : support_max(ref, ahead) - support_min(box, ahead);
      c = support_min(ref, up) - support_min(box, up);
      break;
    case Relation::Middle: {
      Vec3 mean = Vec3::Zero();
      double floor = std::numeric_limits<double>::infinity();
      for (const auto& r : refs) {
        mean += r.center();
        floor = std::min(floor, support_min(r, up));
      }
      mean /= static_cast<double>(refs.size());
      a = mean.dot(right) - box.center().dot(right);
      b = mean.dot(ahead) - box.center().dot(ahead);
      c = floor - support_min(box, up);
      break;
    }
    default: break;
  }
  const Vec3 t = a * right + b * ahead + c * up;
  return append_asset(tx, translated(scaled.splats, t), asset.name);
}

Vec3 move_object(Transaction& tx, InstanceId target, InstanceId reference, Relation relation, double step_ratio,
                 double max_ratio, std::optional<double> distance) {
  if (relation != Relation::Close && relation != Relation::FarAway) {
    throw UnsupportedRelationError("move supports only 'close' and 'far away', got '" +
                                   std::string(to_string(relation)) + "'");
  }
  if (target == reference) throw InvalidArgumentError("move: target and reference are the same instance");
  if (!(step_ratio > 0.0 && step_ratio <= 1.0)) throw InvalidArgumentError("step-ratio must be in (0, 1]");
  if (distance && !(*distance >= 0.0)) throw InvalidArgumentError("move distance must be >= 0");

  const auto members = nonempty_members(tx.overlay(), target);
  const auto ref_members = nonempty_members(tx.overlay(), reference);
  const Vec3 from = members_centroid(tx.scene(), members);
  const Vec3 to = members_centroid(tx.scene(), ref_members);
  const Vec3 diff = to - from;
  const double d = diff.norm();
  if (!(d > 0.0)) throw DegenerateDirectionError("target and reference centroids coincide");
  const Vec3 u = diff / d;

  double len = distance ? *distance : step_ratio * d;
  if (distance && relation == Relation::Close) len = std::min(len, d);
  len = std::min(len, max_ratio * tx.scene().bounds().diagonal());
  const Vec3 t = (relation == Relation::Close ? len : -len) * u;

  std::vector<GaussianSplat> splats;
  splats.reserve(members.size());
  for (std::uint32_t i : members) {
    GaussianSplat g = tx.scene()[i];
    g.set_center(g.center() + t);
    splats.push_back(g);
  }
  std::vector<InstanceId> labels(members.size(), target);
  tx.modify(members, splats, labels);
  return t;
}

InstanceId replace_object(Transaction& tx, InstanceId target, const AssetGaussians& asset, const Vec3& up_axis) {
  if (asset.splats.empty()) throw EmptyAssetError(asset.name);
  const Aabb footprint = instance_aabb(tx.scene(), tx.overlay(), target);
  // Drawn before the removal so the replacement never inherits the target's id.
  const InstanceId id = tx.overlay().next_id();
  remove_object(tx, target, false);

  const AssetGaussians scaled = scale_asset(asset, scale_ratio(footprint.max_edge(), asset.native_aabb.max_edge()));
  const Aabb box = aabb_of(scaled.splats);
  const Vec3 up = up_axis.normalized();
  Vec3 t = footprint.center() - box.center();
  t -= t.dot(up) * up;
  t += (support_min(footprint, up) - support_min(box, up)) * up;
  return append_asset(tx, translated(scaled.splats, t), asset.name, id);
}

// ---- pipeline ----------------------------------------------------------------

std::size_t GroundedEdit::scorer_calls() const {
  return primary.trace.scorer_calls + (reference ? reference->trace.scorer_calls : 0);
}

std::size_t GroundedEdit::predicate_evaluations() const {
  return primary.trace.predicate_evaluations + (reference ? reference->trace.predicate_evaluations : 0);
}

GroundedEdit ground_edit(const InstanceCatalog& catalog, const EditCommand& command, std::string_view prompt,
                         Scorer& scorer, const GroundingOptions& options, const PreviewProvider& preview) {
  GroundedEdit g;
  g.command = command;
  const GroundingQuery query = primary_query(command);

  switch (command.op) {
    case OperationKind::Add: {
      if (command.references.empty() || command.relation == Relation::None) {
        throw UnsupportedRelationError("add needs a placement relation and a reference object");
      }
      if (!is_placement(command.relation)) {
        throw UnsupportedRelationError("add does not support relation '" +
                                       std::string(to_string(command.relation)) + "'");
      }
      g.primary = ground_query(catalog, prompt, query, scorer, options, preview);
      std::vector<Candidate> placement;
      if (command.relation == Relation::Middle) {
        placement = find_references(catalog, command.references);
        if (placement.size() < 2) {
          throw AmbiguousRelationError("'middle' needs at least two reference instances, found " +
                                       std::to_string(placement.size()));
        }
      } else {
        placement.push_back(g.primary.winner);
      }
      for (const auto& c : placement) g.placement.push_back(c.id);
      g.view = build_egocentric_view(catalog.scene_bounds(), placement, {}, options.up);
      break;
    }
    case OperationKind::Move: {
      if (command.relation != Relation::Close && command.relation != Relation::FarAway) {
        throw UnsupportedRelationError("move supports only 'close' and 'far away'");
      }
      if (command.references.empty()) throw UnsupportedRelationError("move needs a reference object");
      g.primary = ground_query(catalog, prompt, query, scorer, options, preview);
      GroundingQuery ref_query;
      ref_query.target = command.references.front();
      GroundingResult ref = ground_query(catalog, prompt, ref_query, scorer, options, preview);
      std::erase_if(ref.ranked, [&](const Candidate& c) { return c.id == g.primary.winner.id; });
      if (ref.ranked.empty()) throw NoMatchError("reference", std::move(ref.trace));
      ref.winner = ref.ranked.front();
      ref.roi = ref.winner.aabb;
      g.reference = std::move(ref);
      break;
    }
    default:
      if (query.target.class_name.empty()) throw NoTargetError("command has nothing to ground");
      g.primary = ground_query(catalog, prompt, query, scorer, options, preview);
      break;
  }
  return g;
}

JournalEntry apply_edit(GaussianScene& scene, SemanticOverlay& overlay, const GroundedEdit& grounded,
                        const EditKnobs& knobs, const AssetGaussians* asset, std::string prompt,
                        const KdIndex* index) {
  validate(knobs);
  const EditCommand& cmd = grounded.command;
  if ((cmd.op == OperationKind::Add || cmd.op == OperationKind::Replace) && !asset) {
    throw AssetNotFoundError(cmd.asset_ref.value_or(""));
  }
  if (cmd.op == OperationKind::Recolor && !cmd.color) throw InvalidArgumentError("recolor without a color");

  Transaction tx(scene, overlay, cmd.op, std::move(prompt));
  try {
    relabel_step(tx, grounded.primary.roi, knobs.knn_k, index);
    const InstanceId winner = grounded.primary.winner.id;
    switch (cmd.op) {
      case OperationKind::Remove: remove_object(tx, winner, knobs.inpaint, knobs.knn_k); break;
      case OperationKind::Recolor: recolor_object(tx, winner, *cmd.color, knobs.keep_sh_rest); break;
      case OperationKind::Add: {
        const EgocentricView view = grounded.view.value_or(EgocentricView{});
        add_object(tx, *asset, grounded.placement, cmd.relation, view, knobs.kappa);
        break;
      }
      case OperationKind::Move:
        if (!grounded.reference) throw InvalidArgumentError("move without a grounded reference");
        move_object(tx, winner, grounded.reference->winner.id, cmd.relation, knobs.step_ratio,
                    knobs.max_move_ratio, cmd.magnitude);
        break;
      case OperationKind::Replace: replace_object(tx, winner, *asset, knobs.up); break;
    }
  } catch (...) {
    const JournalEntry partial = tx.commit();
    revert(partial, scene, overlay);
    throw;
  }
  return tx.commit();
}

std::string to_json(const GroundedEdit& g, int indent) {
  nlohmann::json j;
  j["command"] = command_json(g.command);
  j["primary"] = nlohmann::json::parse(to_json(g.primary, -1));
  j["reference"] = g.reference ? nlohmann::json::parse(to_json(*g.reference, -1)) : nlohmann::json(nullptr);
  j["placement"] = g.placement;
  j["view"] = g.view ? view_json(*g.view) : nlohmann::json(nullptr);
  return j.dump(indent);
}

GroundedEdit grounded_edit_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GroundedEdit g;
    g.command = command_from(j.at("command"));
    g.primary = grounding_result_from_json(j.at("primary").dump());
    if (!j.at("reference").is_null()) g.reference = grounding_result_from_json(j.at("reference").dump());
    g.placement = j.at("placement").get<std::vector<InstanceId>>();
    if (!j.at("view").is_null()) g.view = view_from(j.at("view"));
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("grounded edit JSON: ") + e.what());
  }
}

}  // namespace splatedit
