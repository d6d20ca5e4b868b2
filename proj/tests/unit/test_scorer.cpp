#include <atomic>
#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "splatedit/errors.hpp"
#include "splatedit/scorer.hpp"

// After the Eigen-based headers: resolv.h, pulled in by httplib, defines _res.
#include <httplib.h>
#include <json.hpp>

using namespace splatedit;
using json = nlohmann::json;

namespace {

Candidate candidate(InstanceId id, std::string cls, const Rgb& color) {
  Candidate c;
  c.id = id;
  c.class_name = std::move(cls);
  c.mean_color = color;
  c.aabb = {Vec3::Zero(), Vec3(1, 2, 3)};
  c.centroid = Vec3(0.5, 1, 1.5);
  c.member_count = 10;
  return c;
}

double lexical(const std::string& target, std::optional<std::string> color, const Candidate& c,
               Relation rel = Relation::None, bool satisfied = false) {
  LexicalScorer s;
  const ObjectDescriptor d{target, std::move(color), false};
  return s.score({"p", d, rel, satisfied, c, "", c.aabb.extent(), std::nullopt});
}

/// Local scoring service; `handler` decides each reply.
class FakeService {
 public:
  explicit FakeService(std::function<void(const json&, httplib::Response&)> handler) {
    server_.Post("/score", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_ = json::parse(req.body);
      handler(last_, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }
  const json& last() const { return last_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  json last_;
};

}  // namespace

TEST(LexicalScorer, PublishedFormula) {
  const auto red_chair = candidate(1, "chair", {0.95, 0.05, 0.0});
  EXPECT_DOUBLE_EQ(lexical("chair", std::nullopt, red_chair), 2.0);
  EXPECT_DOUBLE_EQ(lexical("chair", "red", red_chair), 3.0);
  EXPECT_DOUBLE_EQ(lexical("chair", "blue", red_chair), 2.0);
  EXPECT_DOUBLE_EQ(lexical("chair", std::nullopt, red_chair, Relation::Left, true), 2.25);
  EXPECT_DOUBLE_EQ(lexical("chair", std::nullopt, red_chair, Relation::Left, false), 2.0);
  const auto office = candidate(2, "office chair", {0.5, 0.5, 0.5});
  EXPECT_DOUBLE_EQ(lexical("chair", std::nullopt, office), 1.0);
  EXPECT_DOUBLE_EQ(lexical("office chair", std::nullopt, office), 2.0);
}

TEST(LexicalScorer, ColorThresholdBoundary) {
  // |(1,0,0) - (1-0.3,0,0)| = 0.3 is inside; slightly more is outside.
  EXPECT_DOUBLE_EQ(lexical("chair", "red", candidate(1, "chair", {0.7001, 0, 0})), 3.0);
  EXPECT_DOUBLE_EQ(lexical("chair", "red", candidate(1, "chair", {0.69, 0, 0})), 2.0);
}

TEST(LexicalScorer, ClassAndColorOutranksClassOnly) {
  const std::vector<Candidate> two{candidate(0, "chair", {0.9, 0.9, 0.9}), candidate(1, "chair", {0.01, 0.01, 0.01})};
  LexicalScorer s;
  const ObjectDescriptor d{"chair", "black", false};
  const auto r = score_candidates(s, "remove the black chair", d, Relation::None, two);
  EXPECT_EQ(r.winner.id, 1u);
  EXPECT_DOUBLE_EQ(*r.ranked[0].score, 3.0);
  EXPECT_DOUBLE_EQ(*r.ranked[1].score, 2.0);
}

TEST(HttpScorer, UsesServiceScore) {
  FakeService svc([](const json& body, httplib::Response& res) {
    const double s = body.at("meta").at("instance_id").get<int>() == 1 ? 25.31 : 24.25;
    res.set_content(json{{"score", s}}.dump(), "application/json");
  });
  auto http = std::make_shared<HttpScorer>(svc.url(), nullptr);
  EXPECT_TRUE(http->wants_preview());
  const std::vector<Candidate> two{candidate(0, "chair", {0, 0, 0}), candidate(1, "chair", {0, 0, 0})};
  const ObjectDescriptor d{"chair", std::nullopt, false};
  const std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G'};
  const auto r = score_candidates(*http, "remove the chair", d, Relation::None, two, {},
                                  [&](InstanceId) { return png; });
  EXPECT_EQ(r.winner.id, 1u);
  EXPECT_DOUBLE_EQ(*r.winner.score, 25.31);
  EXPECT_EQ(svc.requests(), 2);
  EXPECT_EQ(http->fallback_count(), 0u);
  EXPECT_EQ(svc.last().at("prompt"), "remove the chair");
  EXPECT_EQ(svc.last().at("image_png_b64"), "iVBORw==");
  EXPECT_EQ(svc.last().at("meta").at("class"), "chair");
}

TEST(HttpScorer, FallsBackOnErrorStatus) {
  FakeService svc([](const json&, httplib::Response& res) { res.status = 503; });
  std::vector<std::string> warnings;
  HttpScorer http(svc.url(), nullptr, std::chrono::milliseconds(500),
                  [&](const std::string& w) { warnings.push_back(w); });
  const auto c = candidate(1, "chair", {1, 0, 0});
  const ObjectDescriptor d{"chair", "red", false};
  EXPECT_DOUBLE_EQ(http.score({"p", d, Relation::None, false, c, "red", c.aabb.extent(), std::nullopt}), 3.0);
  EXPECT_EQ(http.fallback_count(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("503"), std::string::npos);
}

TEST(HttpScorer, FallsBackOnMalformedReply) {
  FakeService svc([](const json&, httplib::Response& res) { res.set_content("{\"score\": \"high\"}", "application/json"); });
  HttpScorer http(svc.url(), nullptr, std::chrono::milliseconds(500));
  const auto c = candidate(1, "chair", {1, 0, 0});
  const ObjectDescriptor d{"chair", std::nullopt, false};
  EXPECT_DOUBLE_EQ(http.score({"p", d, Relation::None, false, c, "", c.aabb.extent(), std::nullopt}), 2.0);
  EXPECT_EQ(http.fallback_count(), 1u);
}

TEST(HttpScorer, FallsBackOnTimeout) {
  FakeService svc([](const json&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    res.set_content("{\"score\": 99}", "application/json");
  });
  HttpScorer http(svc.url(), nullptr, std::chrono::milliseconds(200));
  const auto c = candidate(1, "chair", {1, 0, 0});
  const ObjectDescriptor d{"chair", std::nullopt, false};
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_DOUBLE_EQ(http.score({"p", d, Relation::None, false, c, "", c.aabb.extent(), std::nullopt}), 2.0);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(750));
  EXPECT_EQ(http.fallback_count(), 1u);
}

TEST(HttpScorer, FallsBackWhenUnreachable) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  HttpScorer http("http://127.0.0.1:" + std::to_string(port), nullptr, std::chrono::milliseconds(300));
  const auto c = candidate(1, "chair", {1, 0, 0});
  const ObjectDescriptor d{"chair", std::nullopt, false};
  EXPECT_DOUBLE_EQ(http.score({"p", d, Relation::None, false, c, "", c.aabb.extent(), std::nullopt}), 2.0);
  EXPECT_EQ(http.fallback_count(), 1u);
}

TEST(HttpScorer, RejectsBadUrls) {
  EXPECT_THROW(HttpScorer("https://example.com", nullptr), InvalidArgumentError);
  EXPECT_THROW(HttpScorer("http://:80", nullptr), InvalidArgumentError);
  EXPECT_THROW(HttpScorer("http://host:port", nullptr), InvalidArgumentError);
  EXPECT_NO_THROW(HttpScorer("http://localhost:9000/v1/", nullptr));
}

TEST(Scorer, FactoryHonorsEnvironment) {
  ::unsetenv(kScorerUrlEnv);
  EXPECT_EQ(make_scorer()->name(), "lexical");
  ::setenv(kScorerUrlEnv, "http://127.0.0.1:9", 1);
  EXPECT_EQ(make_scorer()->name(), "http(http://127.0.0.1:9)");
  EXPECT_EQ(make_scorer("http://127.0.0.1:10")->name(), "http(http://127.0.0.1:10)");
  ::unsetenv(kScorerUrlEnv);
}

TEST(Scorer, Base64) {
  auto enc = [](std::string s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}
