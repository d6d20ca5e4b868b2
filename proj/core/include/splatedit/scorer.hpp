#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <string>

#include "splatedit/grounding.hpp"

namespace splatedit {

/// Deterministic offline scorer:
///
///   2.00 * (descriptor class tokens / candidate class tokens)
/// + 1.00 * [prompt color given and |mean_color - color| <= color_threshold]
/// + 0.25 * [relation requested and satisfied]
class LexicalScorer final : public Scorer {
 public:
  static constexpr double kClassWeight = 2.0;
  static constexpr double kColorWeight = 1.0;
  static constexpr double kRelationWeight = 0.25;
  static constexpr double kDefaultColorThreshold = 0.3;

  explicit LexicalScorer(const ColorTable& colors = ColorTable::builtin(),
                         double color_threshold = kDefaultColorThreshold)
      : colors_(&colors), color_threshold_(color_threshold) {}

  double score(const ScoringContext& context) override;
  std::string name() const override { return "lexical"; }

 private:
  const ColorTable* colors_;
  double color_threshold_;
};

/// Client for an external scoring service:
///   POST <base>/score  {"prompt", "image_png_b64", "meta"}  ->  {"score"}
/// Any transport or protocol failure falls back to `fallback` and reports a
/// warning through `warn`.
class HttpScorer final : public Scorer {
 public:
  using WarnFn = std::function<void(const std::string&)>;

  HttpScorer(std::string base_url, std::shared_ptr<Scorer> fallback,
             std::chrono::milliseconds timeout = std::chrono::seconds(2), WarnFn warn = {});

  double score(const ScoringContext& context) override;
  bool wants_preview() const override { return true; }
  std::string name() const override { return "http(" + base_url_ + ")"; }

  std::size_t fallback_count() const noexcept { return fallbacks_.load(); }

 private:
  std::string base_url_;
  std::string host_;
  int port_ = 80;
  std::string path_prefix_;
  std::shared_ptr<Scorer> fallback_;
  std::chrono::milliseconds timeout_;
  WarnFn warn_;
  std::atomic<std::size_t> fallbacks_{0};
};

/// Environment variable naming an external scorer base URL.
inline constexpr const char* kScorerUrlEnv = "SPLATEDIT_SCORER_URL";

/// HttpScorer when `url` (or else $SPLATEDIT_SCORER_URL) is set, otherwise the
/// lexical scorer.
std::shared_ptr<Scorer> make_scorer(const std::string& url = {}, HttpScorer::WarnFn warn = {});

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace splatedit
