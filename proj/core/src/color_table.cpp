#include "splatedit/color_table.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <sstream>

#include "splatedit/errors.hpp"
#include "splatedit/splat_model.hpp"

namespace splatedit {

namespace detail {
extern const std::string_view kBuiltinColorsTsv;
}

std::string ColorTable::normalize(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || c == '-' || c == '_') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

ColorTable ColorTable::from_tsv(std::string_view text) {
  ColorTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name, r, g, b;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, r, '\t') ||
        !std::getline(fields, g, '\t') || !std::getline(fields, b, '\t')) {
      throw FormatError("colors.tsv line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    Rgb rgb;
    const std::string* channels[3] = {&r, &g, &b};
    for (int i = 0; i < 3; ++i) {
      int v = -1;
      try {
        v = std::stoi(*channels[i]);
      } catch (const std::exception&) {
      }
      if (v < 0 || v > 255) {
        throw FormatError("colors.tsv line " + std::to_string(line_no) + ": channel out of 0..255");
      }
      rgb[i] = v / 255.0;
    }
    std::string key = normalize(name);
    if (key.empty()) throw FormatError("colors.tsv line " + std::to_string(line_no) + ": empty name");
    table.max_words_ =
        std::max(table.max_words_, static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ') + 1));
    table.entries_.emplace_back(std::move(key), rgb);
  }
  std::stable_sort(table.entries_.begin(), table.entries_.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  auto last = std::unique(table.entries_.begin(), table.entries_.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; });
  table.entries_.erase(last, table.entries_.end());
  return table;
}

ColorTable ColorTable::from_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return from_tsv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

const ColorTable& ColorTable::builtin() {
  static const ColorTable table = from_tsv(detail::kBuiltinColorsTsv);
  return table;
}

const Rgb* ColorTable::find(std::string_view name) const {
  const std::string key = normalize(name);
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                             [](const auto& e, const std::string& k) { return e.first < k; });
  return (it != entries_.end() && it->first == key) ? &it->second : nullptr;
}

Rgb ColorTable::lookup(std::string_view name) const {
  if (const Rgb* c = find(name)) return *c;
  throw UnknownColorError(std::string(name));
}

std::string_view ColorTable::nearest_name(const Rgb& color) const {
  std::string_view best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [name, rgb] : entries_) {
    const double d = (rgb - color).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = name;
    }
  }
  return best;
}

}  // namespace splatedit
