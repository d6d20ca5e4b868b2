#include "splatedit/prompt_parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

#include "splatedit/errors.hpp"

namespace splatedit {

namespace {

struct OpKeyword {
  std::string_view word;
  OperationKind op;
};

constexpr std::array<OpKeyword, 5> kOperations{{
    {"remove", OperationKind::Remove},
    {"add", OperationKind::Add},
    {"change", OperationKind::Recolor},
    {"move", OperationKind::Move},
    {"replace", OperationKind::Replace},
}};

struct RelKeyword {
  std::array<std::string_view, 2> words;  // second empty for single-word lexemes
  Relation rel;
};

// Two-word lexemes first so "far away" wins over any single-word prefix.
constexpr std::array<RelKeyword, 11> kRelations{{
    {{"far", "away"}, Relation::FarAway},
    {{"left", ""}, Relation::Left},
    {{"right", ""}, Relation::Right},
    {{"middle", ""}, Relation::Middle},
    {{"above", ""}, Relation::Above},
    {{"under", ""}, Relation::Under},
    {{"front", ""}, Relation::Front},
    {{"below", ""}, Relation::Below},
    {{"on", ""}, Relation::On},
    {{"back", ""}, Relation::Back},
    {{"close", ""}, Relation::Close},
}};

// Articles and prepositions stripped from object phrases.
constexpr std::array<std::string_view, 10> kStopwords{"the", "a", "an", "of", "to", "in",
                                                      "at", "from", "this", "that"};

// Filler that may follow a relation lexeme: "on top of", "to the left side of".
constexpr std::array<std::string_view, 4> kRelationFiller{"top", "side", "hand", "by"};

bool is_stopword(std::string_view w) {
  return std::find(kStopwords.begin(), kStopwords.end(), w) != kStopwords.end();
}

bool is_relation_filler(std::string_view w) {
  return is_stopword(w) ||
         std::find(kRelationFiller.begin(), kRelationFiller.end(), w) != kRelationFiller.end();
}

std::optional<OperationKind> op_of(std::string_view w) {
  for (const auto& k : kOperations) {
    if (k.word == w) return k.op;
  }
  return std::nullopt;
}

/// Relation lexeme starting at tokens[i]; returns (relation, token length).
std::optional<std::pair<Relation, std::size_t>> relation_at(const std::vector<std::string>& tokens,
                                                            std::size_t i) {
  for (const auto& k : kRelations) {
    if (tokens[i] != k.words[0]) continue;
    if (k.words[1].empty()) return std::pair{k.rel, std::size_t{1}};
    if (i + 1 < tokens.size() && tokens[i + 1] == k.words[1]) return std::pair{k.rel, std::size_t{2}};
  }
  return std::nullopt;
}

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::vector<std::string> strip_stopwords(const std::vector<std::string>& tokens, std::size_t begin,
                                         std::size_t end) {
  std::vector<std::string> out;
  for (std::size_t i = begin; i < end; ++i) {
    if (!is_stopword(tokens[i])) out.push_back(tokens[i]);
  }
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// English plural to singular for the last word of a class phrase; returns
/// nullopt when the word does not look plural.
std::optional<std::string> singular_of(const std::string& w) {
  if (w.size() < 3) return std::nullopt;
  if (ends_with(w, "ies") && w.size() > 3) return w.substr(0, w.size() - 3) + "y";
  for (std::string_view es : {"ches", "shes", "sses", "xes", "zes"}) {
    if (ends_with(w, es)) return w.substr(0, w.size() - 2);
  }
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return std::nullopt;
  if (ends_with(w, "s")) return w.substr(0, w.size() - 1);
  return std::nullopt;
}

ObjectDescriptor make_descriptor(std::vector<std::string> words, const ColorTable& colors) {
  ObjectDescriptor d;
  // Leading color adjective, longest match first; it must leave a class word.
  const std::size_t max_w = std::min(colors.max_words(), words.empty() ? 0 : words.size() - 1);
  for (std::size_t w = max_w; w >= 1; --w) {
    const std::string phrase = join(words, 0, w);
    if (colors.find(phrase)) {
      d.color_attr = ColorTable::normalize(phrase);
      words.erase(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(w));
      break;
    }
  }
  if (!words.empty()) {
    if (auto s = singular_of(words.back())) {
      words.back() = *s;
      d.plural = true;
    }
  }
  d.class_name = join(words, 0, words.size());
  return d;
}

bool parse_number(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string_view keyword(OperationKind op) noexcept {
  for (const auto& k : kOperations) {
    if (k.op == op) return k.word;
  }
  return {};
}

std::string_view keyword(Relation rel) noexcept {
  switch (rel) {
    case Relation::FarAway: return "far away";
    case Relation::None: return "";
    default: break;
  }
  for (const auto& k : kRelations) {
    if (k.rel == rel) return k.words[0];
  }
  return {};
}

std::string_view to_string(OperationKind op) noexcept {
  switch (op) {
    case OperationKind::Remove: return "remove";
    case OperationKind::Add: return "add";
    case OperationKind::Recolor: return "recolor";
    case OperationKind::Move: return "move";
    case OperationKind::Replace: return "replace";
  }
  return "unknown";
}

std::string_view to_string(Relation rel) noexcept {
  switch (rel) {
    case Relation::None: return "none";
    case Relation::Left: return "left";
    case Relation::Right: return "right";
    case Relation::Middle: return "middle";
    case Relation::Above: return "above";
    case Relation::Under: return "under";
    case Relation::Front: return "front";
    case Relation::Below: return "below";
    case Relation::On: return "on";
    case Relation::Back: return "back";
    case Relation::FarAway: return "far_away";
    case Relation::Close: return "close";
  }
  return "unknown";
}

std::optional<OperationKind> operation_from_string(std::string_view s) {
  for (OperationKind op : {OperationKind::Remove, OperationKind::Add, OperationKind::Recolor,
                           OperationKind::Move, OperationKind::Replace}) {
    if (to_string(op) == s) return op;
  }
  return std::nullopt;
}

std::optional<Relation> relation_from_string(std::string_view s) {
  for (int r = 0; r <= static_cast<int>(Relation::Close); ++r) {
    if (to_string(static_cast<Relation>(r)) == s) return static_cast<Relation>(r);
  }
  return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool decimal_point = c == '.' && !cur.empty() && std::isdigit(static_cast<unsigned char>(cur.back())) &&
                               i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (std::isalnum(c) || decimal_point) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::string normalize_prompt(std::string_view text) {
  const auto tokens = tokenize(text);
  const auto kept = strip_stopwords(tokens, 0, tokens.size());
  return join(kept, 0, kept.size());
}

EditCommand parse_prompt(std::string_view text, const ColorTable& colors) {
  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) throw NoOperationError("empty prompt");
  const auto op = op_of(tokens[0]);
  if (!op) {
    throw NoOperationError("prompt must begin with an operation keyword (remove, add, change, "
                           "move, replace); got '" + tokens[0] + "'");
  }
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    if ((tokens[i] == "and" || tokens[i] == "then") && op_of(tokens[i + 1])) {
      throw ChainedPromptError("only one operation per prompt is supported");
    }
  }

  EditCommand cmd;
  cmd.op = *op;
  std::vector<std::string> body(tokens.begin() + 1, tokens.end());

  // Operation-specific tails come off the end before relation binding.
  if (cmd.op == OperationKind::Recolor) {
    std::size_t lead = 0;
    while (lead < body.size() && is_stopword(body[lead])) ++lead;
    if (lead + 1 < body.size() && (body[lead] == "color" || body[lead] == "colour") &&
        body[lead + 1] == "of") {
      body.erase(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(lead + 2));
    }
    std::optional<std::size_t> to_pos;
    for (std::size_t i = body.size(); i-- > 0;) {
      if (body[i] == "to" || body[i] == "into") {
        to_pos = i;
        break;
      }
    }
    if (to_pos) {
      const auto words = strip_stopwords(body, *to_pos + 1, body.size());
      const std::string phrase = join(words, 0, words.size());
      if (phrase.empty()) throw UnknownColorError("");
      cmd.color = colors.lookup(phrase);
      body.resize(*to_pos);
    } else {
      // "change the chair red": longest color suffix that leaves a target.
      bool found = false;
      for (std::size_t w = std::min(colors.max_words(), body.size() > 0 ? body.size() - 1 : 0); w >= 1; --w) {
        const std::string phrase = join(body, body.size() - w, body.size());
        if (const Rgb* c = colors.find(phrase)) {
          cmd.color = *c;
          body.resize(body.size() - w);
          found = true;
          break;
        }
      }
      if (!found) throw UnknownColorError(body.empty() ? std::string() : body.back());
    }
  } else if (cmd.op == OperationKind::Replace) {
    std::optional<std::size_t> with_pos;
    for (std::size_t i = body.size(); i-- > 0;) {
      if (body[i] == "with") {
        with_pos = i;
        break;
      }
    }
    if (!with_pos) throw NoAssetError("replace requires 'with <asset>'");
    const auto words = strip_stopwords(body, *with_pos + 1, body.size());
    if (words.empty()) throw NoAssetError("replace requires 'with <asset>'");
    cmd.asset_ref = join(words, 0, words.size());
    body.resize(*with_pos);
  } else if (cmd.op == OperationKind::Move) {
    double value = 0.0;
    if (body.size() >= 2 && body[body.size() - 2] == "by" && parse_number(body.back(), value)) {
      cmd.magnitude = value;
      body.resize(body.size() - 2);
    }
  }

  // Locate the relation lexeme; it cannot be the first content word.
  std::optional<std::size_t> rel_begin;
  std::size_t rel_end = 0;
  for (std::size_t i = 0, content = 0; i < body.size(); ++i) {
    if (is_stopword(body[i])) continue;
    if (content++ == 0) continue;
    if (auto r = relation_at(body, i)) {
      rel_begin = i;
      cmd.relation = r->first;
      rel_end = i + r->second;
      break;
    }
  }
  if (rel_begin) {
    // "on the left of" / "in front of": a later lexeme after filler wins.
    for (;;) {
      std::size_t j = rel_end;
      while (j < body.size() && is_relation_filler(body[j])) ++j;
      if (j >= body.size()) break;
      auto r = relation_at(body, j);
      if (!r) break;
      cmd.relation = r->first;
      rel_end = j + r->second;
    }
  }

  const std::size_t target_end = rel_begin.value_or(body.size());
  auto target_words = strip_stopwords(body, 0, target_end);
  if (target_words.empty()) throw NoTargetError("prompt names no target object");
  cmd.target = make_descriptor(std::move(target_words), colors);

  if (rel_begin) {
    std::size_t j = rel_end;
    while (j < body.size() && is_relation_filler(body[j])) ++j;
    std::vector<std::string> piece;
    auto flush_piece = [&] {
      auto words = strip_stopwords(piece, 0, piece.size());
      if (!words.empty()) cmd.references.push_back(make_descriptor(std::move(words), colors));
      piece.clear();
    };
    for (; j < body.size(); ++j) {
      if (body[j] == "and") {
        flush_piece();
      } else {
        piece.push_back(body[j]);
      }
    }
    flush_piece();
    if (cmd.references.size() > 2) {
      throw AmbiguousRelationError("at most two reference objects are supported");
    }
    if (cmd.references.empty()) cmd.relation = Relation::None;
  }

  if (cmd.relation == Relation::Middle) {
    const bool duplicated = cmd.references.size() == 2;
    const bool plural = !cmd.references.empty() && cmd.references.front().plural;
    if (!duplicated && !plural) {
      throw AmbiguousRelationError("'middle' needs a plural reference or two reference objects");
    }
  }

  if (cmd.op == OperationKind::Add) cmd.asset_ref = cmd.target.class_name;
  return cmd;
}

std::string describe(const EditCommand& cmd) {
  auto desc = [](const ObjectDescriptor& d) {
    std::string s;
    if (d.color_attr) s += *d.color_attr + " ";
    s += d.class_name;
    if (d.plural) s += "(plural)";
    return s;
  };
  std::string out = std::string(to_string(cmd.op)) + " " + desc(cmd.target);
  if (cmd.relation != Relation::None) {
    out += " " + std::string(to_string(cmd.relation)) + " [";
    for (std::size_t i = 0; i < cmd.references.size(); ++i) {
      out += (i ? ", " : "") + desc(cmd.references[i]);
    }
    out += "]";
  }
  if (cmd.color) {
    out += " color(" + std::to_string((*cmd.color)[0]) + "," + std::to_string((*cmd.color)[1]) + "," +
           std::to_string((*cmd.color)[2]) + ")";
  }
  if (cmd.asset_ref) out += " asset=" + *cmd.asset_ref;
  if (cmd.magnitude) out += " by " + std::to_string(*cmd.magnitude);
  return out;
}

}  // namespace splatedit
