#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splatedit/color_table.hpp"

namespace splatedit {

enum class OperationKind { Remove, Add, Recolor, Move, Replace };

enum class Relation { None, Left, Right, Middle, Above, Under, Front, Below, On, Back, FarAway, Close };

/// Prompt keyword for an operation ("change" for Recolor).
std::string_view keyword(OperationKind op) noexcept;
/// Prompt lexeme for a relation ("far away" for FarAway, "" for None).
std::string_view keyword(Relation rel) noexcept;
std::string_view to_string(OperationKind op) noexcept;
std::string_view to_string(Relation rel) noexcept;
std::optional<OperationKind> operation_from_string(std::string_view s);
std::optional<Relation> relation_from_string(std::string_view s);

struct ObjectDescriptor {
  std::string class_name;                // space-joined, singular
  std::optional<std::string> color_attr; // e.g. "black" in "the black chair"
  bool plural = false;

  friend bool operator==(const ObjectDescriptor&, const ObjectDescriptor&) = default;
};

struct EditCommand {
  OperationKind op = OperationKind::Remove;
  ObjectDescriptor target;
  Relation relation = Relation::None;
  std::vector<ObjectDescriptor> references;  // 0..2
  std::optional<Rgb> color;
  std::optional<std::string> asset_ref;
  std::optional<double> magnitude;

  friend bool operator==(const EditCommand&, const EditCommand&) = default;
};

/// Lowercased tokens of `text`: punctuation other than '.' inside numbers is
/// a separator.
std::vector<std::string> tokenize(std::string_view text);

/// Cache key for a prompt: lowercase tokens with articles and filler words
/// removed, single-space joined.
std::string normalize_prompt(std::string_view text);

/// Grammar:
///   remove  <target> [<relation> <refs>]
///   change  <target> [<relation> <refs>] to <color>
///   add     <asset>  [<relation> <refs>]
///   move    <target> <close|far away> <refs> [by <number>]
///   replace <target> [<relation> <refs>] with <asset>
/// where <refs> is one or two descriptors joined by "and". Words before the
/// relation lexeme bind to the target, words after it to the references. A
/// relation with no reference words is dropped (Relation::None).
EditCommand parse_prompt(std::string_view text, const ColorTable& colors = ColorTable::builtin());

/// Human-readable one-line rendering, e.g. `Remove stool Left [table]`.
std::string describe(const EditCommand& cmd);

}  // namespace splatedit
