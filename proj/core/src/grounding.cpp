#include "splatedit/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

namespace splatedit {

namespace {

std::vector<std::string> words_of(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(w);
  }
  return out;
}

std::vector<InstanceId> ids_of(std::span<const Candidate> cs) {
  std::vector<InstanceId> out;
  out.reserve(cs.size());
  for (const auto& c : cs) out.push_back(c.id);
  return out;
}

double aabb_height_max(const Aabb& b, const Vec3& up) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& c : b.corners()) m = std::max(m, c.dot(up));
  return m;
}

double aabb_height_min(const Aabb& b, const Vec3& up) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : b.corners()) m = std::min(m, c.dot(up));
  return m;
}

/// World axes orthogonal to gravity (up is a world axis).
std::vector<int> lateral_axes(const Vec3& up) {
  std::vector<int> axes;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(up[a]) < 0.5) axes.push_back(a);
  }
  return axes;
}

bool lateral_overlap(const Aabb& a, const Aabb& b, const Vec3& up) {
  for (int axis : lateral_axes(up)) {
    if (std::min(a.max[axis], b.max[axis]) - std::max(a.min[axis], b.min[axis]) < 0.0) return false;
  }
  return true;
}

using P2 = Eigen::Vector2d;

double cross2(const P2& o, const P2& a, const P2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
std::vector<P2> convex_hull(std::vector<P2> pts) {
  std::sort(pts.begin(), pts.end(), [](const P2& a, const P2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<P2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double segment_distance(const P2& p, const P2& a, const P2& b) {
  const P2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Inside (boundary inclusive) the hull of `pts`; a degenerate hull is the
/// segment between its extreme points thickened by `margin`.
bool inside_hull(const P2& p, const std::vector<P2>& pts, double margin) {
  const auto hull = convex_hull(pts);
  if (hull.size() >= 3) {
    for (std::size_t i = 0; i < hull.size(); ++i) {
      if (cross2(hull[i], hull[(i + 1) % hull.size()], p) < 0) return false;
    }
    return true;
  }
  if (hull.size() == 2) return segment_distance(p, hull[0], hull[1]) <= margin;
  if (hull.size() == 1) return (p - hull[0]).norm() <= margin;
  return false;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool pairwise_holds(const EgocentricView& view, Relation rel, const Candidate& t, const Candidate& r,
                    double margin) {
  switch (rel) {
    case Relation::Left: return view.sx(t.centroid) < view.sx(r.centroid) - margin;
    case Relation::Right: return view.sx(t.centroid) > view.sx(r.centroid) + margin;
    case Relation::Front: return view.depth(t.centroid) < view.depth(r.centroid) - margin;
    case Relation::Back: return view.depth(t.centroid) > view.depth(r.centroid) + margin;
    case Relation::Above:
      return view.height(t.centroid) > aabb_height_max(r.aabb, view.up) && lateral_overlap(t.aabb, r.aabb, view.up);
    case Relation::On:
      return view.height(t.centroid) > aabb_height_max(r.aabb, view.up) &&
             lateral_overlap(t.aabb, r.aabb, view.up) &&
             aabb_height_min(t.aabb, view.up) - aabb_height_max(r.aabb, view.up) <= margin;
    case Relation::Under:
    case Relation::Below: return view.height(t.centroid) < aabb_height_min(r.aabb, view.up);
    default: return false;
  }
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

nlohmann::json aabb_json(const Aabb& b) {
  if (b.empty()) return nullptr;
  return {{"min", vec_json(b.min)}, {"max", vec_json(b.max)}};
}

Aabb aabb_from(const nlohmann::json& j) {
  if (j.is_null()) return {};
  return {vec_from(j.at("min")), vec_from(j.at("max"))};
}

nlohmann::json candidate_json(const Candidate& c) {
  nlohmann::json j{{"id", c.id},
                   {"class", c.class_name},
                   {"aabb", aabb_json(c.aabb)},
                   {"centroid", vec_json(c.centroid)},
                   {"mean_color", vec_json(c.mean_color)},
                   {"member_count", c.member_count}};
  j["score"] = c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr);
  return j;
}

Candidate candidate_from(const nlohmann::json& j) {
  Candidate c;
  c.id = j.at("id").get<InstanceId>();
  c.class_name = j.at("class").get<std::string>();
  c.aabb = aabb_from(j.at("aabb"));
  c.centroid = vec_from(j.at("centroid"));
  c.mean_color = vec_from(j.at("mean_color"));
  c.member_count = j.at("member_count").get<std::size_t>();
  if (!j.at("score").is_null()) c.score = j.at("score").get<double>();
  return c;
}

nlohmann::json trace_json(const GroundingTrace& t) {
  nlohmann::json j;
  j["prompt"] = t.prompt;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : t.stages) {
    j["stages"].push_back({{"stage", s.name}, {"survivors", s.survivors}, {"detail", s.detail}});
  }
  j["references"] = t.references;
  if (t.view) {
    j["view"] = {{"eye", vec_json(t.view->eye)},       {"forward", vec_json(t.view->forward)},
                 {"up", vec_json(t.view->up)},         {"right", vec_json(t.view->right)},
                 {"screen_up", vec_json(t.view->screen_up)}};
  } else {
    j["view"] = nullptr;
  }
  j["scorer_calls"] = t.scorer_calls;
  j["predicate_evaluations"] = t.predicate_evaluations;
  j["cache_hit"] = t.cache_hit;
  return j;
}

GroundingTrace trace_from(const nlohmann::json& j) {
  GroundingTrace t;
  t.prompt = j.at("prompt").get<std::string>();
  for (const auto& s : j.at("stages")) {
    t.stages.push_back({s.at("stage").get<std::string>(), s.at("survivors").get<std::vector<InstanceId>>(),
                        s.at("detail").get<std::string>()});
  }
  t.references = j.at("references").get<std::vector<InstanceId>>();
  if (!j.at("view").is_null()) {
    const auto& v = j.at("view");
    t.view = EgocentricView{vec_from(v.at("eye")), vec_from(v.at("forward")), vec_from(v.at("up")),
                            vec_from(v.at("right")), vec_from(v.at("screen_up"))};
  }
  t.scorer_calls = j.at("scorer_calls").get<std::size_t>();
  t.predicate_evaluations = j.at("predicate_evaluations").get<std::size_t>();
  t.cache_hit = j.at("cache_hit").get<bool>();
  return t;
}

}  // namespace

NoMatchError::NoMatchError(std::string stage, GroundingTrace trace)
    : Error("no_match", "no instance matches the prompt (emptied at " + stage + ")"),
      stage_(std::move(stage)),
      trace_(std::move(trace)) {}

// ---- catalog ------------------------------------------------------------------

InstanceCatalog InstanceCatalog::build(const GaussianScene& scene, const SemanticOverlay& overlay) {
  InstanceCatalog cat;
  cat.scene_bounds_ = scene.bounds();
  struct Accum {
    Aabb box;
    Vec3 pos = Vec3::Zero();
    Vec3 color = Vec3::Zero();
    std::size_t n = 0;
  };
  std::map<InstanceId, Accum> acc;
  for (const auto& r : overlay.instances) acc[r.id];
  const std::size_t n = std::min(scene.size(), overlay.assignment.size());
  // Cache the last looked-up entry: members of one instance are usually contiguous.
  InstanceId last_id = kUnlabeled;
  Accum* last = nullptr;
  for (std::size_t i = 0; i < n; ++i) {
    const InstanceId id = overlay.assignment[i];
    if (id == kUnlabeled) continue;
    if (id != last_id) {
      auto it = acc.find(id);
      if (it == acc.end()) continue;
      last_id = id;
      last = &it->second;
    }
    const Vec3 p = scene[i].center();
    last->box.expand(p);
    last->pos += p;
    last->color += scene[i].base_color();
    ++last->n;
  }
  for (const auto& r : overlay.instances) {
    const Accum& a = acc[r.id];
    if (a.n == 0) continue;
    Candidate c;
    c.id = r.id;
    c.class_name = r.class_name;
    c.aabb = a.box;
    c.centroid = a.pos / static_cast<double>(a.n);
    c.mean_color = a.color / static_cast<double>(a.n);
    c.member_count = a.n;
    cat.instances_.push_back(std::move(c));
  }
  return cat;
}

InstanceCatalog InstanceCatalog::from_parts(std::vector<Candidate> instances, Aabb scene_bounds) {
  std::sort(instances.begin(), instances.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  InstanceCatalog cat;
  cat.instances_ = std::move(instances);
  cat.scene_bounds_ = scene_bounds;
  return cat;
}

const Candidate* InstanceCatalog::find(InstanceId id) const {
  auto it = std::lower_bound(instances_.begin(), instances_.end(), id,
                             [](const Candidate& c, InstanceId v) { return c.id < v; });
  return (it != instances_.end() && it->id == id) ? &*it : nullptr;
}

// ---- view -------------------------------------------------------------------

EgocentricView build_egocentric_view(const Aabb& scene_bounds, std::span<const Candidate> candidates,
                                     std::span<const Candidate> references, const Vec3& up) {
  EgocentricView v;
  v.up = up.normalized();
  v.eye = scene_bounds.empty() ? Vec3::Zero() : scene_bounds.center();

  Vec3 sum = Vec3::Zero();
  std::set<InstanceId> seen;
  for (auto group : {candidates, references}) {
    for (const auto& c : group) {
      if (seen.insert(c.id).second) sum += c.centroid;
    }
  }
  Vec3 forward = seen.empty() ? v.up : Vec3(sum / static_cast<double>(seen.size()) - v.eye);
  if (forward.norm() < 1e-12) forward = v.up;
  forward.normalize();

  if (forward.cross(v.up).norm() < 1e-6) {
    Vec3 tilt = Vec3::UnitX() - Vec3::UnitX().dot(v.up) * v.up;
    if (tilt.norm() < 1e-12) tilt = Vec3::UnitY() - Vec3::UnitY().dot(v.up) * v.up;
    tilt.normalize();
    const double sign = forward.dot(v.up) < 0.0 ? -1.0 : 1.0;
    forward = std::cos(kDegenerateTiltRadians) * sign * v.up + std::sin(kDegenerateTiltRadians) * tilt;
    forward.normalize();
  }
  v.forward = forward;
  v.right = forward.cross(v.up).normalized();
  v.screen_up = v.right.cross(forward).normalized();
  return v;
}

// ---- filters ------------------------------------------------------------------

std::vector<Candidate> find_candidates(const InstanceCatalog& catalog, const ObjectDescriptor& descriptor) {
  const auto wanted = words_of(descriptor.class_name);
  std::vector<Candidate> out;
  if (wanted.empty()) return out;
  for (const auto& c : catalog.instances()) {
    const auto have = words_of(c.class_name);
    const bool all = std::all_of(wanted.begin(), wanted.end(), [&](const std::string& w) {
      return std::find(have.begin(), have.end(), w) != have.end();
    });
    if (all) out.push_back(c);
  }
  return out;
}

std::vector<Candidate> find_references(const InstanceCatalog& catalog,
                                       std::span<const ObjectDescriptor> references) {
  std::map<InstanceId, Candidate> merged;
  for (const auto& d : references) {
    for (auto& c : find_candidates(catalog, d)) merged.emplace(c.id, std::move(c));
  }
  std::vector<Candidate> out;
  for (auto& [id, c] : merged) out.push_back(std::move(c));
  return out;
}

double relation_margin(const Aabb& scene_bounds, double margin_ratio) {
  return margin_ratio * scene_bounds.diagonal();
}

std::vector<Candidate> apply_relation_filter(const EgocentricView& view, std::span<const Candidate> candidates,
                                             Relation relation, std::span<const Candidate> references,
                                             double margin, std::size_t* evaluations) {
  std::size_t local_evals = 0;
  std::size_t& evals = evaluations ? *evaluations : local_evals;
  std::vector<Candidate> out;
  if (relation == Relation::None) return {candidates.begin(), candidates.end()};

  if (relation == Relation::Middle) {
    if (references.size() < 2) {
      throw AmbiguousRelationError("'middle' needs at least two reference instances, found " +
                                   std::to_string(references.size()));
    }
    for (const auto& c : candidates) {
      std::vector<P2> pts;
      for (const auto& r : references) {
        if (r.id != c.id) pts.emplace_back(view.sx(r.centroid), view.sy(r.centroid));
      }
      ++evals;
      if (pts.size() >= 2 && inside_hull(P2(view.sx(c.centroid), view.sy(c.centroid)), pts, margin)) {
        out.push_back(c);
      }
    }
    return out;
  }

  if (relation == Relation::Close || relation == Relation::FarAway) {
    std::vector<double> all;
    for (const auto& c : candidates) {
      for (const auto& r : references) {
        if (r.id != c.id) all.push_back((c.centroid - r.centroid).norm());
      }
    }
    if (all.empty()) return out;
    const double med = median(all);
    for (const auto& c : candidates) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& r : references) {
        if (r.id != c.id) nearest = std::min(nearest, (c.centroid - r.centroid).norm());
      }
      ++evals;
      if (!std::isfinite(nearest)) continue;
      const bool keep = relation == Relation::Close ? nearest <= med : nearest > med;
      if (keep) out.push_back(c);
    }
    return out;
  }

  for (const auto& c : candidates) {
    bool keep = false;
    for (const auto& r : references) {
      if (r.id == c.id) continue;
      ++evals;
      if (pairwise_holds(view, relation, c, r, margin)) {
        keep = true;
        break;
      }
    }
    if (keep) out.push_back(c);
  }
  return out;
}

// ---- scoring ------------------------------------------------------------------

GroundingResult score_candidates(Scorer& scorer, std::string_view prompt, const ObjectDescriptor& target,
                                 Relation relation, std::vector<Candidate> survivors, GroundingTrace trace,
                                 const PreviewProvider& preview) {
  if (survivors.empty()) {
    const std::string stage = trace.stages.empty() ? "scorer" : trace.stages.back().name;
    throw NoMatchError(stage, std::move(trace));
  }
  const ColorTable& colors = ColorTable::builtin();
  for (auto& c : survivors) {
    ScoringContext ctx{prompt, target, relation, relation != Relation::None, c,
                       std::string(colors.nearest_name(c.mean_color)), c.aabb.extent(), std::nullopt};
    if (preview && scorer.wants_preview()) ctx.preview_png = preview(c.id);
    c.score = scorer.score(ctx);
    ++trace.scorer_calls;
  }
  std::sort(survivors.begin(), survivors.end(), [](const Candidate& a, const Candidate& b) {
    if (*a.score != *b.score) return *a.score > *b.score;
    return a.id < b.id;
  });
  std::ostringstream detail;
  detail << scorer.name();
  for (const auto& c : survivors) detail << " " << c.id << ":" << *c.score;
  trace.stages.push_back({"scorer", ids_of(survivors), detail.str()});

  GroundingResult result;
  result.winner = survivors.front();
  result.roi = result.winner.aabb;
  result.ranked = std::move(survivors);
  result.trace = std::move(trace);
  return result;
}

GroundingQuery primary_query(const EditCommand& command) {
  GroundingQuery q;
  switch (command.op) {
    case OperationKind::Add:
      if (!command.references.empty()) q.target = command.references.front();
      break;
    case OperationKind::Move:
      q.target = command.target;
      break;
    default:
      q.target = command.target;
      q.relation = command.relation;
      q.references = command.references;
      break;
  }
  return q;
}

GroundingResult ground_query(const InstanceCatalog& catalog, std::string_view prompt, const GroundingQuery& query,
                             Scorer& scorer, const GroundingOptions& options, const PreviewProvider& preview) {
  GroundingTrace trace;
  trace.prompt = std::string(prompt);

  auto candidates = find_candidates(catalog, query.target);
  trace.stages.push_back({"class-filter", ids_of(candidates), "class '" + query.target.class_name + "'"});
  if (candidates.empty()) throw NoMatchError("class-filter", std::move(trace));

  if (query.relation != Relation::None) {
    const auto references = find_references(catalog, query.references);
    trace.references = ids_of(references);
    const EgocentricView view = build_egocentric_view(catalog.scene_bounds(), candidates, references, options.up);
    trace.view = view;
    const double margin = relation_margin(catalog.scene_bounds(), options.margin_ratio);
    candidates = apply_relation_filter(view, candidates, query.relation, references, margin,
                                       &trace.predicate_evaluations);
    trace.stages.push_back({"relation-filter", ids_of(candidates),
                            std::string(to_string(query.relation)) + " vs " +
                                std::to_string(references.size()) + " reference instance(s)"});
    if (candidates.empty()) throw NoMatchError("relation-filter", std::move(trace));
  }
  return score_candidates(scorer, prompt, query.target, query.relation, std::move(candidates), std::move(trace),
                          preview);
}

GroundingResult ground(const GaussianScene& scene, const SemanticOverlay& overlay, const EditCommand& command,
                       Scorer& scorer, const GroundingOptions& options, std::string_view prompt) {
  const auto catalog = InstanceCatalog::build(scene, overlay);
  const auto query = primary_query(command);
  if (query.target.class_name.empty()) throw NoTargetError("command has nothing to ground");
  return ground_query(catalog, prompt, query, scorer, options);
}

// ---- JSON -----------------------------------------------------------------------

std::string to_json(const GroundingTrace& trace, int indent) { return trace_json(trace).dump(indent); }

std::string to_json(const GroundingResult& result, int indent) {
  nlohmann::json j;
  j["winner"] = candidate_json(result.winner);
  j["ranked"] = nlohmann::json::array();
  for (const auto& c : result.ranked) j["ranked"].push_back(candidate_json(c));
  j["roi"] = aabb_json(result.roi);
  j["trace"] = trace_json(result.trace);
  return j.dump(indent);
}

GroundingResult grounding_result_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    GroundingResult r;
    r.winner = candidate_from(j.at("winner"));
    for (const auto& c : j.at("ranked")) r.ranked.push_back(candidate_from(c));
    r.roi = aabb_from(j.at("roi"));
    r.trace = trace_from(j.at("trace"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("grounding result JSON: ") + e.what());
  }
}

std::string to_json(const InstanceCatalog& catalog, int indent) {
  nlohmann::json j;
  j["scene_bounds"] = aabb_json(catalog.scene_bounds());
  j["instances"] = nlohmann::json::array();
  for (const auto& c : catalog.instances()) j["instances"].push_back(candidate_json(c));
  return j.dump(indent);
}

InstanceCatalog catalog_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<Candidate> cs;
    for (const auto& c : j.at("instances")) cs.push_back(candidate_from(c));
    return InstanceCatalog::from_parts(std::move(cs), aabb_from(j.at("scene_bounds")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("instance catalog JSON: ") + e.what());
  }
}

}  // namespace splatedit
