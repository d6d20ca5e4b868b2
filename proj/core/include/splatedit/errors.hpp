#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace splatedit {

/// Base class for every error raised by the library. `code()` is a stable
/// machine-readable identifier used in CLI output and HTTP error bodies.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// ---- scene and label I/O --------------------------------------------------

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error("format_error", message) {}
};

class TruncationError : public Error {
 public:
  TruncationError(std::uint64_t byte_offset, std::uint64_t expected_bytes);
  std::uint64_t byte_offset() const noexcept { return byte_offset_; }
  std::uint64_t expected_bytes() const noexcept { return expected_bytes_; }

 private:
  std::uint64_t byte_offset_;
  std::uint64_t expected_bytes_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

class LabelMismatchError : public Error {
 public:
  LabelMismatchError(std::uint64_t expected, std::uint64_t actual);
  std::uint64_t expected() const noexcept { return expected_; }
  std::uint64_t actual() const noexcept { return actual_; }

 private:
  std::uint64_t expected_;
  std::uint64_t actual_;
};

class DanglingIdError : public Error {
 public:
  DanglingIdError(std::uint32_t id, std::uint64_t vertex);
  std::uint32_t id() const noexcept { return id_; }

 private:
  std::uint32_t id_;
};

class EmptyInstanceError : public Error {
 public:
  explicit EmptyInstanceError(std::uint32_t id);
};

class UnknownInstanceError : public Error {
 public:
  explicit UnknownInstanceError(std::uint32_t id);
};

// ---- prompt parsing ---------------------------------------------------------

class NoOperationError : public Error {
 public:
  explicit NoOperationError(const std::string& message)
      : Error("no_operation", message) {}
};

class UnknownColorError : public Error {
 public:
  explicit UnknownColorError(std::string word);
  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

class NoTargetError : public Error {
 public:
  explicit NoTargetError(const std::string& message) : Error("no_target", message) {}
};

class NoAssetError : public Error {
 public:
  explicit NoAssetError(const std::string& message) : Error("no_asset", message) {}
};

class ChainedPromptError : public Error {
 public:
  explicit ChainedPromptError(const std::string& message)
      : Error("chained_prompt", message) {}
};

// ---- spatial index ----------------------------------------------------------

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& message) : Error("empty_input", message) {}
};

// ---- grounding --------------------------------------------------------------

class AmbiguousRelationError : public Error {
 public:
  explicit AmbiguousRelationError(const std::string& message)
      : Error("ambiguous_relation", message) {}
};

// NoMatchError lives in grounding.hpp because it carries the grounding trace.

// ---- editing ----------------------------------------------------------------

class InvalidScaleError : public Error {
 public:
  explicit InvalidScaleError(double s);
};

class EmptyAssetError : public Error {
 public:
  explicit EmptyAssetError(const std::string& name);
};

class AssetNotFoundError : public Error {
 public:
  explicit AssetNotFoundError(const std::string& name);
};

class DegenerateDirectionError : public Error {
 public:
  explicit DegenerateDirectionError(const std::string& message)
      : Error("degenerate_direction", message) {}
};

class UnsupportedRelationError : public Error {
 public:
  explicit UnsupportedRelationError(const std::string& message)
      : Error("unsupported_relation", message) {}
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& message)
      : Error("invalid_argument", message) {}
};

// ---- session ----------------------------------------------------------------

class NothingToUndoError : public Error {
 public:
  NothingToUndoError() : Error("nothing_to_undo", "journal is empty; nothing to undo") {}
};

/// Pipeline stage an edit request failed in.
enum class Stage { Parser, Grounding, Editor, Session };

const char* to_string(Stage stage) noexcept;

/// Error raised by the session pipeline: the original error wrapped with the
/// stage it escaped from.
class StageError : public Error {
 public:
  StageError(Stage stage, const Error& inner, std::string trace_json = {});
  Stage stage() const noexcept { return stage_; }
  /// Grounding trace as JSON when the failure came out of grounding, else empty.
  const std::string& trace_json() const noexcept { return trace_json_; }

 private:
  Stage stage_;
  std::string trace_json_;
};

}  // namespace splatedit
