#include "splatedit/scorer.hpp"

#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

namespace splatedit {

namespace {

std::size_t word_count(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

}  // namespace

double LexicalScorer::score(const ScoringContext& ctx) {
  const std::size_t have = word_count(ctx.candidate.class_name);
  const std::size_t want = word_count(ctx.target.class_name);
  const double class_fraction = have == 0 ? 0.0 : std::min(1.0, double(want) / double(have));

  double color_term = 0.0;
  if (ctx.target.color_attr) {
    if (const Rgb* c = colors_->find(*ctx.target.color_attr)) {
      if ((ctx.candidate.mean_color - *c).norm() <= color_threshold_) color_term = 1.0;
    }
  }
  const double relation_term = (ctx.relation != Relation::None && ctx.relation_satisfied) ? 1.0 : 0.0;
  return kClassWeight * class_fraction + kColorWeight * color_term + kRelationWeight * relation_term;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

HttpScorer::HttpScorer(std::string base_url, std::shared_ptr<Scorer> fallback, std::chrono::milliseconds timeout,
                       WarnFn warn)
    : base_url_(std::move(base_url)), fallback_(std::move(fallback)), timeout_(timeout), warn_(std::move(warn)) {
  std::string rest = base_url_;
  if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
  } else if (rest.find("://") != std::string::npos) {
    throw InvalidArgumentError("scorer URL must use http://, got '" + base_url_ + "'");
  }
  const auto slash = rest.find('/');
  std::string authority = rest.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : rest.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos) {
    host_ = authority.substr(0, colon);
    try {
      port_ = std::stoi(authority.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgumentError("invalid port in scorer URL '" + base_url_ + "'");
    }
  } else {
    host_ = authority;
  }
  if (host_.empty()) throw InvalidArgumentError("scorer URL has no host: '" + base_url_ + "'");
  if (!fallback_) fallback_ = std::make_shared<LexicalScorer>();
}

double HttpScorer::score(const ScoringContext& ctx) {
  nlohmann::json body;
  body["prompt"] = std::string(ctx.prompt);
  body["image_png_b64"] = ctx.preview_png ? base64_encode(*ctx.preview_png) : std::string();
  body["meta"] = {{"instance_id", ctx.candidate.id},
                  {"class", ctx.candidate.class_name},
                  {"mean_color", ctx.mean_color_name},
                  {"relation", std::string(to_string(ctx.relation))},
                  {"relation_satisfied", ctx.relation_satisfied},
                  {"aabb_dims", {ctx.aabb_dims.x(), ctx.aabb_dims.y(), ctx.aabb_dims.z()}}};

  std::string failure;
  try {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    auto res = client.Post(path_prefix_ + "/score", body.dump(), "application/json");
    if (!res) {
      failure = "request failed: " + httplib::to_string(res.error());
    } else if (res->status != 200) {
      failure = "HTTP status " + std::to_string(res->status);
    } else {
      const auto reply = nlohmann::json::parse(res->body);
      const auto& s = reply.at("score");
      if (!s.is_number()) throw std::runtime_error("'score' is not a number");
      return s.get<double>();
    }
  } catch (const std::exception& e) {
    failure = e.what();
  }
  ++fallbacks_;
  if (warn_) warn_("external scorer at " + base_url_ + " unavailable (" + failure + "); using lexical scorer");
  return fallback_->score(ctx);
}

std::shared_ptr<Scorer> make_scorer(const std::string& url, HttpScorer::WarnFn warn) {
  std::string chosen = url;
  if (chosen.empty()) {
    if (const char* env = std::getenv(kScorerUrlEnv)) chosen = env;
  }
  auto lexical = std::make_shared<LexicalScorer>();
  if (chosen.empty()) return lexical;
  return std::make_shared<HttpScorer>(chosen, lexical, std::chrono::seconds(2), std::move(warn));
}

}  // namespace splatedit
