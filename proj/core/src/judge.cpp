#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "cci/judge.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "cci/error.hpp"
#include "cci/log.hpp"

namespace cci {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

Verdict verdict_from_string(std::string_view s) {
  const std::string v = lower(s);
  if (v == "similar") return Verdict::similar;
  if (v == "different") return Verdict::different;
  throw InputError("unknown verdict: " + std::string(s));
}

}  // namespace

std::string to_string(Verdict verdict) { return verdict == Verdict::similar ? "similar" : "different"; }

OfflineJudge::OfflineJudge(const nlohmann::json& fixture) {
  try {
    for (const auto& p : fixture.at("pairs"))
      add(p.at("gt").get<std::string>(), p.at("pred").get<std::string>(),
          verdict_from_string(p.at("verdict").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed judge fixture: ") + e.what());
  }
}

OfflineJudge OfflineJudge::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open judge fixture: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return OfflineJudge(j);
}

void OfflineJudge::add(std::string_view gt, std::string_view pred, Verdict verdict) {
  table_[{lower(gt), lower(pred)}] = verdict;
}

Verdict OfflineJudge::judge(std::string_view gt, std::string_view pred) {
  const std::string g = lower(gt), p = lower(pred);
  if (auto it = table_.find({g, p}); it != table_.end()) return it->second;
  if (auto it = table_.find({p, g}); it != table_.end()) return it->second;
  throw InputError("offline judge has no verdict for (" + std::string(gt) + ", " + std::string(pred) + ")");
}

nlohmann::json builtin_judge_fixture() {
  return {{"pairs",
           {{{"gt", "siamang"}, {"pred", "chimpanzee"}, {"verdict", "similar"}},
            {{"gt", "border collie"}, {"pred", "australian shepherd"}, {"verdict", "similar"}},
            {{"gt", "cat"}, {"pred", "airplane"}, {"verdict", "different"}},
            {{"gt", "lion"}, {"pred", "bicycle"}, {"verdict", "different"}}}}};
}

std::string judge_system_prompt() {
  return "You are a vision expert with deep knowledge of object categories and visual characteristics. Your task is "
         "to determine whether two categories are visually similar or clearly different based on appearance alone. "
         "Consider shape, texture, color, size, and typical visual features that a human would notice.";
}

std::string judge_user_prompt(std::string_view gt, std::string_view pred) {
  std::string out;
  out += "Ground truth class: ";
  out += gt;
  out += "\nPredicted class: ";
  out += pred;
  out +=
      "\n\nQuestion: Evaluate whether these two categories are visually similar or clearly different. Consider the "
      "following:\n"
      "1. Would a human observer easily confuse the two categories in a standard image?\n"
      "2. Do they share key visual features (shape, color patterns, textures) that make them look alike?\n"
      "3. If they are visually distinct and unlikely to be confused, classify them as different.\n\n"
      "Respond with a single word only: similar if they are visually alike, different if they are clearly distinct.";
  return out;
}

Verdict parse_verdict(std::string_view reply) {
  std::string word = lower(reply);
  const auto strip = [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '"' || c == '\'' ||
                                         c == '.' || c == '`' || c == '*'; };
  while (!word.empty() && strip(word.front())) word.erase(word.begin());
  while (!word.empty() && strip(word.back())) word.pop_back();
  if (word == "similar") return Verdict::similar;
  if (word == "different") return Verdict::different;
  throw ServiceError("unparseable judge reply: " + std::string(reply.substr(0, 80)));
}

void RateLimiter::acquire() {
  if (interval_ <= 0.0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(interval_));
  }
  std::this_thread::sleep_until(slot);
}

HttpJudgeConfig http_judge_config_from_env(HttpJudgeConfig base) {
  const char* key = std::getenv(kJudgeKeyEnv);
  if (!key || !*key) throw InputError(std::string("judge http mode requires ") + kJudgeKeyEnv);
  base.api_key = key;
  return base;
}

nlohmann::json judge_request_body(const HttpJudgeConfig& config, std::string_view gt, std::string_view pred) {
  return {{"model", config.model},
          {"temperature", 0},
          {"messages",
           {{{"role", "system"}, {"content", judge_system_prompt()}},
            {{"role", "user"}, {"content", judge_user_prompt(gt, pred)}}}}};
}

HttpJudge::HttpJudge(HttpJudgeConfig config) : config_(std::move(config)), limiter_(config_.requests_per_second) {
  if (config_.api_key.empty()) throw InputError("http judge needs an API key");
  if (config_.url.find("://") == std::string::npos) throw InputError("judge URL needs a scheme: " + config_.url);
}

Verdict HttpJudge::judge(std::string_view gt, std::string_view pred) {
  const auto scheme_end = config_.url.find("://");
  const auto path_start = config_.url.find('/', scheme_end + 3);
  const std::string origin = config_.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
  const std::string body = judge_request_body(config_, gt, pred).dump();
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

  auto delay = config_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    limiter_.acquire();
    httplib::Client client(origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    const auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status != 200) {
      throw ServiceError("judge endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    } else {
      std::string content;
      try {
        content = nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw ServiceError(std::string("malformed judge response: ") + e.what());
      }
      return parse_verdict(content);
    }
    log::warn("judge_retry", {{"attempt", attempt + 1}, {"error", last_error}});
  }
  throw ServiceError("judge endpoint failed after retries: " + last_error);
}

}  // namespace cci
