#include "splatedit/errors.hpp"

namespace splatedit {

TruncationError::TruncationError(std::uint64_t byte_offset, std::uint64_t expected_bytes)
    : Error("truncated",
            "payload truncated at byte offset " + std::to_string(byte_offset) +
                " (expected " + std::to_string(expected_bytes) + " bytes)"),
      byte_offset_(byte_offset),
      expected_bytes_(expected_bytes) {}

LabelMismatchError::LabelMismatchError(std::uint64_t expected, std::uint64_t actual)
    : Error("label_mismatch", "label record count mismatch: expected " +
                                  std::to_string(expected) + ", got " +
                                  std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

DanglingIdError::DanglingIdError(std::uint32_t id, std::uint64_t vertex)
    : Error("dangling_id", "vertex " + std::to_string(vertex) +
                               " references unknown instance id " + std::to_string(id)),
      id_(id) {}

EmptyInstanceError::EmptyInstanceError(std::uint32_t id)
    : Error("empty_instance",
            "instance " + std::to_string(id) + " has no assigned Gaussians") {}

UnknownInstanceError::UnknownInstanceError(std::uint32_t id)
    : Error("unknown_instance", "instance " + std::to_string(id) + " does not exist") {}

UnknownColorError::UnknownColorError(std::string word)
    : Error("unknown_color", "unknown color '" + word + "'"), word_(std::move(word)) {}

InvalidScaleError::InvalidScaleError(double s)
    : Error("invalid_scale", "scale factor must be positive, got " + std::to_string(s)) {}

EmptyAssetError::EmptyAssetError(const std::string& name)
    : Error("empty_asset", "asset '" + name + "' contains no Gaussians") {}

AssetNotFoundError::AssetNotFoundError(const std::string& name)
    : Error("asset_not_found", "no registered asset named '" + name + "'") {}

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::Parser: return "parser";
    case Stage::Grounding: return "grounding";
    case Stage::Editor: return "editor";
    case Stage::Session: return "session";
  }
  return "unknown";
}

StageError::StageError(Stage stage, const Error& inner, std::string trace_json)
    : Error(inner.code(), inner.what()), stage_(stage), trace_json_(std::move(trace_json)) {}

}  // namespace splatedit
