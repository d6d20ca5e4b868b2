#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatedit/prompt_parser.hpp"
#include "splatedit/splat_model.hpp"

namespace splatedit {

/// One primitive mutation with enough prior state to invert it.
struct Delta {
  enum class Kind : std::uint8_t { Modify = 1, Erase = 2, Append = 3 };

  Kind kind = Kind::Modify;
  // Modify: indices overwritten. Erase: original indices removed (ascending).
  std::vector<std::uint32_t> indices;
  std::vector<GaussianSplat> prior_splats;
  std::vector<InstanceId> prior_labels;
  // Append: number of Gaussians appended at the end.
  std::uint64_t appended = 0;
};

struct JournalEntry {
  std::uint64_t id = 0;
  OperationKind op = OperationKind::Remove;
  std::string prompt;
  std::int64_t timestamp_ms = 0;  // unix epoch
  std::vector<Delta> deltas;      // in application order
  std::optional<std::vector<InstanceRecord>> prior_instances;
  std::vector<InstanceId> added_instances;
  std::uint64_t prior_overlay_version = 0;
  std::uint64_t prior_geometry_version = 0;
  bool geometry_changed = false;  // some Gaussian center moved, vanished or appeared

  std::size_t affected_count() const;
  std::size_t added_count() const;
};

/// Records mutations of a scene+overlay pair and produces the journal entry
/// that undoes them. Every write to a scene under edit goes through here.
class Transaction {
 public:
  Transaction(GaussianScene& scene, SemanticOverlay& overlay, OperationKind op, std::string prompt = {});

  const GaussianScene& scene() const noexcept { return *scene_; }
  const SemanticOverlay& overlay() const noexcept { return *overlay_; }

  /// Overwrites splats and labels at `indices` (any order, no duplicates).
  void modify(std::span<const std::uint32_t> indices, std::span<const GaussianSplat> splats,
              std::span<const InstanceId> labels);
  void relabel(std::span<const std::uint32_t> indices, std::span<const InstanceId> labels);
  void erase(std::vector<std::uint32_t> indices);
  void append(std::span<const GaussianSplat> splats, InstanceId label);
  void set_instances(std::vector<InstanceRecord> instances);
  /// Adds an instance record and marks it as created by this edit.
  void add_instance(InstanceRecord record);

  bool positions_changed() const noexcept { return positions_changed_; }

  JournalEntry commit(std::uint64_t id = 0, std::uint64_t prior_overlay_version = 0,
                      std::uint64_t prior_geometry_version = 0);

 private:
  GaussianScene* scene_;
  SemanticOverlay* overlay_;
  JournalEntry entry_;
  bool positions_changed_ = false;
};

/// Applies the inverse of every delta in reverse order.
void revert(const JournalEntry& entry, GaussianScene& scene, SemanticOverlay& overlay);

/// journal.bin: a sequence of (u64 little-endian byte length, entry payload).
std::vector<std::byte> encode_entry(const JournalEntry& entry);
JournalEntry decode_entry(std::span<const std::byte> payload);
std::vector<JournalEntry> read_journal(const std::filesystem::path& path);
void write_journal(const std::filesystem::path& path, std::span<const JournalEntry> entries);

}  // namespace splatedit
