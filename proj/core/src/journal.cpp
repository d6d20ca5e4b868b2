#include "splatedit/journal.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include "splatedit/errors.hpp"

namespace splatedit {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'J', '1'};

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  template <class T>
  void array(std::span<const T> v) {
    pod<std::uint64_t>(v.size());
    const auto bytes = std::as_bytes(v);
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void string(std::string_view s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    const auto bytes = std::as_bytes(std::span(s.data(), s.size()));
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <class T>
  std::vector<T> array() {
    const auto n = pod<std::uint64_t>();
    if (n > (in_.size() - pos_) / sizeof(T)) throw FormatError("journal: array length exceeds entry");
    std::vector<T> v(n);
    if (n) std::memcpy(v.data(), in_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  std::string string() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("journal: entry truncated");
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

template <class T>
void erase_sorted(std::vector<T>& v, std::span<const std::uint32_t> ascending) {
  if (ascending.empty()) return;
  std::size_t out = ascending.front(), next = 0;
  for (std::size_t i = ascending.front(); i < v.size(); ++i) {
    if (next < ascending.size() && ascending[next] == i) {
      ++next;
      continue;
    }
    v[out++] = v[i];
  }
  v.resize(out);
}

template <class T>
void insert_sorted(std::vector<T>& v, std::span<const std::uint32_t> ascending, std::span<const T> values) {
  if (ascending.empty()) return;
  std::vector<T> merged;
  const std::size_t total = v.size() + values.size();
  merged.reserve(total);
  std::size_t src = 0, next = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (next < ascending.size() && ascending[next] == i) {
      merged.push_back(values[next++]);
    } else {
      merged.push_back(v.at(src++));
    }
  }
  v = std::move(merged);
}

}  // namespace

std::size_t JournalEntry::affected_count() const {
  std::size_t n = 0;
  for (const auto& d : deltas) n += d.indices.size();
  return n;
}

std::size_t JournalEntry::added_count() const {
  std::size_t n = 0;
  for (const auto& d : deltas) n += d.appended;
  return n;
}

Transaction::Transaction(GaussianScene& scene, SemanticOverlay& overlay, OperationKind op, std::string prompt)
    : scene_(&scene), overlay_(&overlay) {
  entry_.op = op;
  entry_.prompt = std::move(prompt);
}

void Transaction::modify(std::span<const std::uint32_t> indices, std::span<const GaussianSplat> splats,
                         std::span<const InstanceId> labels) {
  if (indices.size() != splats.size() || indices.size() != labels.size()) {
    throw InvalidArgumentError("Transaction::modify: size mismatch");
  }
  if (indices.empty()) return;
  Delta d;
  d.kind = Delta::Kind::Modify;
  d.indices.assign(indices.begin(), indices.end());
  d.prior_splats.reserve(indices.size());
  d.prior_labels.reserve(indices.size());
  for (std::uint32_t i : indices) {
    d.prior_splats.push_back(scene_->splats().at(i));
    d.prior_labels.push_back(overlay_->assignment.at(i));
    if (d.prior_splats.back().position != splats[d.prior_splats.size() - 1].position) positions_changed_ = true;
  }
  scene_->set(indices, splats);
  for (std::size_t j = 0; j < indices.size(); ++j) overlay_->assignment[indices[j]] = labels[j];
  entry_.deltas.push_back(std::move(d));
}

void Transaction::relabel(std::span<const std::uint32_t> indices, std::span<const InstanceId> labels) {
  if (indices.size() != labels.size()) throw InvalidArgumentError("Transaction::relabel: size mismatch");
  if (indices.empty()) return;
  Delta d;
  d.kind = Delta::Kind::Modify;  // label-only: prior_splats stays empty
  d.indices.assign(indices.begin(), indices.end());
  d.prior_labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    d.prior_labels.push_back(overlay_->assignment.at(indices[j]));
    overlay_->assignment[indices[j]] = labels[j];
  }
  entry_.deltas.push_back(std::move(d));
}

void Transaction::erase(std::vector<std::uint32_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  if (indices.empty()) return;
  if (indices.back() >= scene_->size()) throw InvalidArgumentError("Transaction::erase: index out of range");
  Delta d;
  d.kind = Delta::Kind::Erase;
  d.prior_splats.reserve(indices.size());
  d.prior_labels.reserve(indices.size());
  for (std::uint32_t i : indices) {
    d.prior_splats.push_back(scene_->splats()[i]);
    d.prior_labels.push_back(overlay_->assignment[i]);
  }
  d.indices = std::move(indices);
  scene_->erase(d.indices);
  erase_sorted(overlay_->assignment, d.indices);
  positions_changed_ = true;
  entry_.deltas.push_back(std::move(d));
}

void Transaction::append(std::span<const GaussianSplat> splats, InstanceId label) {
  if (splats.empty()) return;
  Delta d;
  d.kind = Delta::Kind::Append;
  d.appended = splats.size();
  scene_->append(splats);
  overlay_->assignment.insert(overlay_->assignment.end(), splats.size(), label);
  positions_changed_ = true;
  entry_.deltas.push_back(std::move(d));
}

void Transaction::set_instances(std::vector<InstanceRecord> instances) {
  if (!entry_.prior_instances) entry_.prior_instances = overlay_->instances;
  overlay_->instances = std::move(instances);
}

void Transaction::add_instance(InstanceRecord record) {
  if (!entry_.prior_instances) entry_.prior_instances = overlay_->instances;
  entry_.added_instances.push_back(record.id);
  overlay_->upsert(std::move(record));
}

JournalEntry Transaction::commit(std::uint64_t id, std::uint64_t prior_overlay_version,
                                 std::uint64_t prior_geometry_version) {
  entry_.id = id;
  entry_.prior_overlay_version = prior_overlay_version;
  entry_.prior_geometry_version = prior_geometry_version;
  entry_.geometry_changed = positions_changed_;
  entry_.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
  return std::move(entry_);
}

void revert(const JournalEntry& entry, GaussianScene& scene, SemanticOverlay& overlay) {
  for (auto it = entry.deltas.rbegin(); it != entry.deltas.rend(); ++it) {
    const Delta& d = *it;
    switch (d.kind) {
      case Delta::Kind::Append:
        scene.truncate(scene.size() - d.appended);
        overlay.assignment.resize(overlay.assignment.size() - d.appended);
        break;
      case Delta::Kind::Erase:
        scene.insert(d.indices, d.prior_splats);
        insert_sorted<InstanceId>(overlay.assignment, d.indices, d.prior_labels);
        break;
      case Delta::Kind::Modify:
        if (!d.prior_splats.empty()) scene.set(d.indices, d.prior_splats);
        for (std::size_t j = 0; j < d.indices.size(); ++j) overlay.assignment.at(d.indices[j]) = d.prior_labels[j];
        break;
    }
  }
  if (entry.prior_instances) overlay.instances = *entry.prior_instances;
}

std::vector<std::byte> encode_entry(const JournalEntry& e) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod<std::uint64_t>(e.id);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.op));
  w.pod<std::int64_t>(e.timestamp_ms);
  w.string(e.prompt);
  w.pod<std::uint64_t>(e.prior_overlay_version);
  w.pod<std::uint64_t>(e.prior_geometry_version);
  w.pod<std::uint8_t>(e.geometry_changed ? 1 : 0);
  w.pod<std::uint8_t>(e.prior_instances ? 1 : 0);
  if (e.prior_instances) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.prior_instances->size()));
    for (const auto& r : *e.prior_instances) {
      w.pod<std::uint32_t>(r.id);
      w.string(r.class_name);
      w.pod<double>(r.confidence);
    }
  }
  w.array<InstanceId>(e.added_instances);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.deltas.size()));
  for (const auto& d : e.deltas) {
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(d.kind));
    w.array<std::uint32_t>(d.indices);
    w.array<GaussianSplat>(d.prior_splats);
    w.array<InstanceId>(d.prior_labels);
    w.pod<std::uint64_t>(d.appended);
  }
  return w.take();
}

JournalEntry decode_entry(std::span<const std::byte> payload) {
  Reader r(payload);
  for (char c : kMagic) {
    if (r.pod<char>() != c) throw FormatError("journal: bad entry magic");
  }
  JournalEntry e;
  e.id = r.pod<std::uint64_t>();
  const auto op = r.pod<std::uint8_t>();
  if (op > static_cast<std::uint8_t>(OperationKind::Replace)) throw FormatError("journal: bad operation kind");
  e.op = static_cast<OperationKind>(op);
  e.timestamp_ms = r.pod<std::int64_t>();
  e.prompt = r.string();
  e.prior_overlay_version = r.pod<std::uint64_t>();
  e.prior_geometry_version = r.pod<std::uint64_t>();
  e.geometry_changed = r.pod<std::uint8_t>() != 0;
  if (r.pod<std::uint8_t>()) {
    const auto n = r.pod<std::uint32_t>();
    std::vector<InstanceRecord> table;
    for (std::uint32_t i = 0; i < n; ++i) {
      InstanceRecord rec;
      rec.id = r.pod<std::uint32_t>();
      rec.class_name = r.string();
      rec.confidence = r.pod<double>();
      table.push_back(std::move(rec));
    }
    e.prior_instances = std::move(table);
  }
  e.added_instances = r.array<InstanceId>();
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    Delta d;
    const auto kind = r.pod<std::uint8_t>();
    if (kind < 1 || kind > 3) throw FormatError("journal: bad delta kind");
    d.kind = static_cast<Delta::Kind>(kind);
    d.indices = r.array<std::uint32_t>();
    d.prior_splats = r.array<GaussianSplat>();
    d.prior_labels = r.array<InstanceId>();
    d.appended = r.pod<std::uint64_t>();
    e.deltas.push_back(std::move(d));
  }
  if (!r.done()) throw FormatError("journal: trailing bytes in entry");
  return e;
}

std::vector<JournalEntry> read_journal(const std::filesystem::path& path) {
  std::vector<JournalEntry> out;
  if (!std::filesystem::exists(path)) return out;
  const auto bytes = read_file(path);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < sizeof(std::uint64_t)) throw FormatError("journal: truncated length prefix");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + pos, sizeof len);
    pos += sizeof len;
    if (len > bytes.size() - pos) throw FormatError("journal: truncated entry");
    out.push_back(decode_entry(std::span(bytes).subspan(pos, len)));
    pos += len;
  }
  return out;
}

void write_journal(const std::filesystem::path& path, std::span<const JournalEntry> entries) {
  std::vector<std::byte> out;
  for (const auto& e : entries) {
    const auto payload = encode_entry(e);
    const std::uint64_t len = payload.size();
    const auto* p = reinterpret_cast<const std::byte*>(&len);
    out.insert(out.end(), p, p + sizeof len);
    out.insert(out.end(), payload.begin(), payload.end());
  }
  write_file_atomic(path, out);
}

}  // namespace splatedit
