#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace splatedit {

/// Linear RGB in [0,1]^3.
using Rgb = Eigen::Vector3d;

/// Named colors loaded from a `name<TAB>r<TAB>g<TAB>b` file with 8-bit
/// channels. Names are matched case-insensitively with runs of whitespace
/// collapsed, so "Dark  Red" finds "dark red".
class ColorTable {
 public:
  /// The table compiled into the library from core/data/colors.tsv.
  static const ColorTable& builtin();

  static ColorTable from_tsv(std::string_view text);
  static ColorTable from_file(const std::filesystem::path& path);

  /// Throws UnknownColorError on a miss.
  Rgb lookup(std::string_view name) const;
  const Rgb* find(std::string_view name) const;

  /// Name of the entry with the smallest Euclidean RGB distance.
  std::string_view nearest_name(const Rgb& color) const;

  /// Longest number of words a single entry spans ("dark slate gray" = 3).
  std::size_t max_words() const noexcept { return max_words_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, Rgb>>& entries() const noexcept { return entries_; }

  static std::string normalize(std::string_view name);

 private:
  std::vector<std::pair<std::string, Rgb>> entries_;  // sorted by name
  std::size_t max_words_ = 1;
};

}  // namespace splatedit
