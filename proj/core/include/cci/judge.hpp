#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

namespace cci {

enum class Verdict { similar, different };

std::string to_string(Verdict verdict);

// Decides whether two class names look alike.
class SimilarityJudge {
 public:
  virtual ~SimilarityJudge() = default;
  virtual Verdict judge(std::string_view gt, std::string_view pred) = 0;
};

// Fixture table {"pairs": [{"gt", "pred", "verdict"}]}. Lookup is
// case-insensitive and falls back to the swapped pair; a miss throws.
class OfflineJudge final : public SimilarityJudge {
 public:
  OfflineJudge() = default;
  explicit OfflineJudge(const nlohmann::json& fixture);
  static OfflineJudge from_file(const std::filesystem::path& path);

  void add(std::string_view gt, std::string_view pred, Verdict verdict);
  Verdict judge(std::string_view gt, std::string_view pred) override;
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::pair<std::string, std::string>, Verdict> table_;
};

// The four worked examples that accompany the judge prompt.
nlohmann::json builtin_judge_fixture();

std::string judge_system_prompt();
std::string judge_user_prompt(std::string_view gt, std::string_view pred);

// Case-insensitive single word, surrounding whitespace/quotes/period allowed.
// Throws ServiceError on anything else.
Verdict parse_verdict(std::string_view reply);

// Token bucket shared by every caller of one judge.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second) : interval_(requests_per_second > 0 ? 1.0 / requests_per_second : 0.0) {}
  void acquire();

 private:
  std::mutex mutex_;
  double interval_;
  std::chrono::steady_clock::time_point next_{};
};

struct HttpJudgeConfig {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key;
  int retries = 3;
  std::chrono::milliseconds backoff{500};  // doubles after every failure
  double requests_per_second = 2.0;
  std::chrono::seconds timeout{60};
};

inline constexpr const char* kJudgeKeyEnv = "CCI_JUDGE_API_KEY";

// Reads the credential from CCI_JUDGE_API_KEY; throws InputError if unset.
HttpJudgeConfig http_judge_config_from_env(HttpJudgeConfig base = {});

// Chat-completion request body with both prompts and temperature 0.
nlohmann::json judge_request_body(const HttpJudgeConfig& config, std::string_view gt, std::string_view pred);

class HttpJudge final : public SimilarityJudge {
 public:
  explicit HttpJudge(HttpJudgeConfig config);
  Verdict judge(std::string_view gt, std::string_view pred) override;

 private:
  HttpJudgeConfig config_;
  RateLimiter limiter_;
};

}  // namespace cci
