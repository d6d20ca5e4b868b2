#include "splatedit/splat_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <Eigen/Geometry>
#include <json.hpp>

#include "splatedit/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "PLY I/O assumes a little-endian host");

namespace splatedit {

namespace {

constexpr double kQuatTolerance = 1e-6;

void normalize_rotation(GaussianSplat& s) {
  const double w = s.rotation[0], x = s.rotation[1], y = s.rotation[2], z = s.rotation[3];
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    s.rotation = {1.0f, 0.0f, 0.0f, 0.0f};
    return;
  }
  if (std::abs(n - 1.0) <= kQuatTolerance) return;
  for (auto& c : s.rotation) c = static_cast<float>(c / n);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

// ---- GaussianSplat ----------------------------------------------------------

void GaussianSplat::set_center(const Vec3& p) {
  position = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
}

Mat3 GaussianSplat::covariance() const {
  const Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
  const Mat3 r = q.normalized().toRotationMatrix();
  const Vec3 s(std::exp(double(log_scale[0])), std::exp(double(log_scale[1])),
               std::exp(double(log_scale[2])));
  const Mat3 rs = r * s.asDiagonal();
  return rs * rs.transpose();
}

Vec3 GaussianSplat::base_color() const {
  Vec3 c;
  for (int i = 0; i < 3; ++i) c[i] = std::clamp(double(sh_dc[i]) * kShC0 + 0.5, 0.0, 1.0);
  return c;
}

bool bitwise_equal(const GaussianSplat& a, const GaussianSplat& b) noexcept {
  return std::memcmp(&a, &b, sizeof(GaussianSplat)) == 0;
}

std::array<Vec3, 8> Aabb::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    out[i] = Vec3((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(),
                  (i & 4) ? max.z() : min.z());
  }
  return out;
}

// ---- GaussianScene ----------------------------------------------------------

GaussianScene::GaussianScene(std::vector<GaussianSplat> splats, std::string source_path)
    : splats_(std::move(splats)), source_path_(std::move(source_path)) {
  recompute_bounds();
}

void GaussianScene::recompute_bounds() {
  Aabb b;
  for (const auto& s : splats_) b.expand(s.center());
  bounds_ = b;
}

void GaussianScene::set(std::size_t i, const GaussianSplat& s) {
  const bool moved = splats_.at(i).position != s.position;
  splats_[i] = s;
  if (moved) recompute_bounds();
}

void GaussianScene::set(std::span<const std::uint32_t> indices, std::span<const GaussianSplat> splats) {
  if (indices.size() != splats.size()) throw InvalidArgumentError("set: index/splat count mismatch");
  bool moved = false;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    GaussianSplat& dst = splats_.at(indices[j]);
    moved = moved || dst.position != splats[j].position;
    dst = splats[j];
  }
  if (moved) recompute_bounds();
}

void GaussianScene::append(std::span<const GaussianSplat> splats) {
  splats_.insert(splats_.end(), splats.begin(), splats.end());
  for (const auto& s : splats) bounds_.expand(s.center());
}

void GaussianScene::erase(std::span<const std::uint32_t> ascending_indices) {
  if (ascending_indices.empty()) return;
  std::size_t out = ascending_indices.front();
  std::size_t next = 0;
  for (std::size_t i = ascending_indices.front(); i < splats_.size(); ++i) {
    if (next < ascending_indices.size() && ascending_indices[next] == i) {
      ++next;
      continue;
    }
    splats_[out++] = splats_[i];
  }
  splats_.resize(out);
  recompute_bounds();
}

void GaussianScene::insert(std::span<const std::uint32_t> ascending_indices,
                           std::span<const GaussianSplat> splats) {
  if (ascending_indices.size() != splats.size()) {
    throw InvalidArgumentError("insert: index/splat count mismatch");
  }
  if (ascending_indices.empty()) return;
  const std::size_t final_size = splats_.size() + splats.size();
  std::vector<GaussianSplat> merged;
  merged.reserve(final_size);
  std::size_t src = 0, next = 0;
  for (std::size_t i = 0; i < final_size; ++i) {
    if (next < ascending_indices.size() && ascending_indices[next] == i) {
      merged.push_back(splats[next++]);
    } else {
      merged.push_back(splats_.at(src++));
    }
  }
  splats_ = std::move(merged);
  recompute_bounds();
}

void GaussianScene::truncate(std::size_t new_size) {
  if (new_size >= splats_.size()) return;
  splats_.resize(new_size);
  recompute_bounds();
}

// ---- SemanticOverlay --------------------------------------------------------

const InstanceRecord* SemanticOverlay::find(InstanceId id) const {
  auto it = std::lower_bound(instances.begin(), instances.end(), id,
                             [](const InstanceRecord& r, InstanceId v) { return r.id < v; });
  return (it != instances.end() && it->id == id) ? &*it : nullptr;
}

InstanceId SemanticOverlay::next_id() const {
  return instances.empty() ? 0 : instances.back().id + 1;
}

void SemanticOverlay::upsert(InstanceRecord record) {
  auto it = std::lower_bound(instances.begin(), instances.end(), record.id,
                             [](const InstanceRecord& r, InstanceId v) { return r.id < v; });
  if (it != instances.end() && it->id == record.id) {
    *it = std::move(record);
  } else {
    instances.insert(it, std::move(record));
  }
}

void SemanticOverlay::erase_instance(InstanceId id) {
  std::erase_if(instances, [id](const InstanceRecord& r) { return r.id == id; });
}

std::size_t SemanticOverlay::member_count(InstanceId id) const {
  return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), id));
}

void SemanticOverlay::validate(std::size_t splat_count) const {
  if (assignment.size() != splat_count) {
    throw LabelMismatchError(splat_count, assignment.size());
  }
  for (std::size_t i = 1; i < instances.size(); ++i) {
    if (instances[i - 1].id >= instances[i].id) {
      throw FormatError("instance table is not strictly sorted by id");
    }
  }
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != kUnlabeled && !contains(assignment[i])) {
      throw DanglingIdError(assignment[i], i);
    }
  }
}

// ---- file helpers -----------------------------------------------------------

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading '" + path.string() + "'");
  }
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

// ---- PLY ----------------------------------------------------------------------

const std::array<std::string, kPlyFloatsPerSplat>& ply_property_names() {
  static const auto names = [] {
    std::array<std::string, kPlyFloatsPerSplat> n;
    std::size_t i = 0;
    for (const char* s : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) n[i++] = s;
    for (std::size_t k = 0; k < kShRestCount; ++k) n[i++] = "f_rest_" + std::to_string(k);
    for (const char* s : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
      n[i++] = s;
    }
    return n;
  }();
  return names;
}

std::string canonical_ply_header(std::size_t vertex_count) {
  std::string h = "ply\nformat binary_little_endian 1.0\ncomment splatedit\n";
  h += "element vertex " + std::to_string(vertex_count) + "\n";
  for (const auto& name : ply_property_names()) h += "property float " + name + "\n";
  h += "end_header\n";
  return h;
}

GaussianScene parse_ply(std::span<const std::byte> bytes, std::string source_path) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  static constexpr std::string_view kEnd = "end_header";

  std::size_t pos = 0;
  std::size_t header_len = std::string_view::npos;
  std::vector<std::string_view> lines;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line == kEnd) {
      header_len = pos;
      break;
    }
    lines.push_back(line);
    if (lines.size() > 4096) break;
  }
  if (header_len == std::string_view::npos) throw FormatError("missing end_header");
  if (lines.empty() || lines[0] != "ply") throw FormatError("missing 'ply' magic");

  bool have_format = false;
  bool in_vertex = false;
  std::optional<std::uint64_t> vertex_count;
  std::vector<std::string> props;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto w = split_words(lines[i]);
    if (w.empty()) continue;
    if (w[0] == "comment" || w[0] == "obj_info") continue;
    if (w[0] == "format") {
      if (w.size() != 3 || w[1] != "binary_little_endian" || w[2] != "1.0") {
        throw FormatError("unsupported format '" + std::string(lines[i]) +
                          "' (binary_little_endian 1.0 required)");
      }
      have_format = true;
    } else if (w[0] == "element") {
      if (w.size() != 3) throw FormatError("malformed element line");
      if (w[1] != "vertex") throw FormatError("unsupported element '" + w[1] + "'");
      if (vertex_count) throw FormatError("duplicate vertex element");
      try {
        std::size_t used = 0;
        vertex_count = std::stoull(w[2], &used);
        if (used != w[2].size()) throw std::invalid_argument("count");
      } catch (const std::exception&) {
        throw FormatError("invalid vertex count '" + w[2] + "'");
      }
      in_vertex = true;
    } else if (w[0] == "property") {
      if (!in_vertex) throw FormatError("property outside vertex element");
      if (w.size() == 3 && (w[1] == "float" || w[1] == "float32")) {
        props.push_back(w[2]);
      } else {
        throw FormatError("property '" + w.back() + "' must be float32");
      }
    } else {
      throw FormatError("unrecognized header line '" + std::string(lines[i]) + "'");
    }
  }
  if (!have_format) throw FormatError("missing format line");
  if (!vertex_count) throw FormatError("missing 'element vertex'");

  const auto& names = ply_property_names();
  std::map<std::string, std::size_t> slot_of;
  for (std::size_t i = 0; i < names.size(); ++i) slot_of[names[i]] = i;

  std::vector<std::size_t> slot(props.size());
  std::vector<bool> seen(names.size(), false);
  for (std::size_t i = 0; i < props.size(); ++i) {
    auto it = slot_of.find(props[i]);
    if (it == slot_of.end()) throw FormatError("unexpected property '" + props[i] + "'");
    if (seen[it->second]) throw FormatError("duplicate property '" + props[i] + "'");
    seen[it->second] = true;
    slot[i] = it->second;
  }
  std::string missing;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!seen[i]) missing += (missing.empty() ? "" : ", ") + names[i];
  }
  if (!missing.empty()) throw FormatError("missing properties: " + missing);

  const std::uint64_t record = kPlyFloatsPerSplat * sizeof(float);
  const std::uint64_t available = bytes.size() - header_len;
  if (*vertex_count > available / record) {
    throw TruncationError(bytes.size(), header_len + *vertex_count * record);
  }

  std::vector<GaussianSplat> splats(*vertex_count);
  const std::byte* payload = bytes.data() + header_len;
  bool canonical = true;
  for (std::size_t i = 0; i < slot.size(); ++i) canonical = canonical && slot[i] == i;
  if (canonical) {
    if (!splats.empty()) std::memcpy(splats.data(), payload, splats.size() * record);
  } else {
    for (std::size_t v = 0; v < splats.size(); ++v) {
      float* dst = reinterpret_cast<float*>(&splats[v]);
      const std::byte* src = payload + v * record;
      for (std::size_t p = 0; p < slot.size(); ++p) {
        std::memcpy(dst + slot[p], src + p * sizeof(float), sizeof(float));
      }
    }
  }
  for (auto& s : splats) normalize_rotation(s);
  return GaussianScene(std::move(splats), std::move(source_path));
}

GaussianScene load_ply(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_ply(bytes, path.string());
}

std::vector<std::byte> serialize_ply(std::span<const GaussianSplat> splats) {
  const std::string header = canonical_ply_header(splats.size());
  std::vector<std::byte> out(header.size() + splats.size_bytes());
  std::memcpy(out.data(), header.data(), header.size());
  if (!splats.empty()) std::memcpy(out.data() + header.size(), splats.data(), splats.size_bytes());
  return out;
}

void save_ply(const GaussianScene& scene, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_ply(scene.splats()));
}

// ---- labels -------------------------------------------------------------------

SemanticOverlay parse_labels(std::size_t splat_count, std::string_view json_text,
                             std::span<const std::byte> bin_bytes, double min_confidence) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", 0) != 1) {
    throw FormatError("labels.json: expected object with \"version\": 1");
  }
  if (!doc.contains("instances") || !doc["instances"].is_array()) {
    throw FormatError("labels.json: missing \"instances\" array");
  }

  SemanticOverlay all;
  std::unordered_set<InstanceId> ids;
  for (const auto& item : doc["instances"]) {
    InstanceRecord r;
    try {
      r.id = item.at("id").get<InstanceId>();
      r.class_name = to_lower(item.at("class").get<std::string>());
      r.confidence = item.at("confidence").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("labels.json: malformed instance: ") + e.what());
    }
    if (r.id == kUnlabeled) throw FormatError("labels.json: id 0xFFFFFFFF is reserved");
    if (r.class_name.empty()) throw FormatError("labels.json: empty class name for id " + std::to_string(r.id));
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw FormatError("labels.json: confidence out of [0,1] for id " + std::to_string(r.id));
    }
    if (!ids.insert(r.id).second) throw FormatError("labels.json: duplicate id " + std::to_string(r.id));
    all.instances.push_back(std::move(r));
  }
  std::sort(all.instances.begin(), all.instances.end(),
            [](const InstanceRecord& a, const InstanceRecord& b) { return a.id < b.id; });

  if (bin_bytes.size() % sizeof(std::uint32_t) != 0) {
    throw FormatError("labels.bin: size is not a multiple of 4 bytes");
  }
  const std::size_t count = bin_bytes.size() / sizeof(std::uint32_t);
  if (count != splat_count) throw LabelMismatchError(splat_count, count);
  all.assignment.resize(count);
  if (count > 0) std::memcpy(all.assignment.data(), bin_bytes.data(), bin_bytes.size());
  for (std::size_t i = 0; i < count; ++i) {
    if (all.assignment[i] != kUnlabeled && ids.count(all.assignment[i]) == 0) {
      throw DanglingIdError(all.assignment[i], i);
    }
  }

  std::unordered_set<InstanceId> dropped;
  std::erase_if(all.instances, [&](const InstanceRecord& r) {
    if (r.confidence < min_confidence) {
      dropped.insert(r.id);
      return true;
    }
    return false;
  });
  if (!dropped.empty()) {
    for (auto& a : all.assignment) {
      if (a != kUnlabeled && dropped.count(a)) a = kUnlabeled;
    }
  }
  return all;
}

SemanticOverlay load_labels(const GaussianScene& scene, const std::filesystem::path& json_path,
                            const std::filesystem::path& bin_path, double min_confidence) {
  const auto json_bytes = read_file(json_path);
  const std::string_view json_text(reinterpret_cast<const char*>(json_bytes.data()), json_bytes.size());
  const auto bin = read_file(bin_path);
  return parse_labels(scene.size(), json_text, bin, min_confidence);
}

std::string labels_to_json(const SemanticOverlay& overlay) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["instances"] = nlohmann::json::array();
  for (const auto& r : overlay.instances) {
    doc["instances"].push_back({{"id", r.id}, {"class", r.class_name}, {"confidence", r.confidence}});
  }
  return doc.dump(2) + "\n";
}

std::vector<std::byte> labels_to_bin(const SemanticOverlay& overlay) {
  const auto bytes = std::as_bytes(std::span(overlay.assignment));
  return {bytes.begin(), bytes.end()};
}

void save_labels(const SemanticOverlay& overlay, const std::filesystem::path& json_path,
                 const std::filesystem::path& bin_path) {
  write_file_atomic(json_path, labels_to_json(overlay));
  write_file_atomic(bin_path, labels_to_bin(overlay));
}

Aabb instance_aabb(const GaussianScene& scene, const SemanticOverlay& overlay, InstanceId id) {
  if (!overlay.contains(id)) throw UnknownInstanceError(id);
  Aabb box;
  const std::size_t n = std::min(scene.size(), overlay.assignment.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (overlay.assignment[i] == id) box.expand(scene[i].center());
  }
  if (box.empty()) throw EmptyInstanceError(id);
  return box;
}

}  // namespace splatedit
