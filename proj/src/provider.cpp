#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <json.hpp>
#include <regex>
#include <thread>

#include "urs/io.hpp"
#include "urs/mask_synth.hpp"

namespace urs {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// Pulls the completion text out of the common response shapes.
std::string completion_text(const nlohmann::json& j) {
  if (j.contains("completion") && j["completion"].is_string()) return j["completion"];
  if (j.contains("text") && j["text"].is_string()) return j["text"];
  if (j.contains("choices") && !j["choices"].empty()) {
    const auto& c = j["choices"][0];
    if (c.contains("text")) return c["text"];
    if (c.contains("message")) return c["message"].at("content");
  }
  if (j.contains("content") && j["content"].is_array() && !j["content"].empty()) return j["content"][0].at("text");
  throw std::runtime_error("provider response has no completion text");
}

}  // namespace

std::optional<std::string> extract_candidate(const std::string& completion) {
  std::string code = completion;
  static const std::regex fence(R"(```[A-Za-z0-9_+-]*[ \t]*\r?\n([\s\S]*?)```)");
  std::smatch m;
  if (std::regex_search(completion, m, fence)) code = m[1].str();
  if (code.find("def generate_mask") == std::string::npos) return std::nullopt;
  return code;
}

StubProvider::StubProvider(std::vector<std::string> corpus) : corpus_(std::move(corpus)) {
  if (corpus_.empty()) throw std::invalid_argument("stub provider needs at least one completion");
}

StubProvider StubProvider::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("stub corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::string> corpus;
  for (const auto& f : files) corpus.push_back(read_text(f));
  if (corpus.empty()) throw IoError("stub corpus directory is empty: " + dir.string());
  return StubProvider(std::move(corpus));
}

std::string StubProvider::complete(const std::string&) {
  ++calls_;
  const std::string& out = corpus_[next_];
  next_ = (next_ + 1) % corpus_.size();
  return out;
}

LiveProviderConfig LiveProviderConfig::from_environment() {
  LiveProviderConfig c;
  c.url = env_or("URS_PROVIDER_URL", "");
  c.model = env_or("URS_PROVIDER_MODEL", c.model);
  const std::string key_var = env_or("URS_PROVIDER_KEY_VAR", "URS_API_KEY");
  c.api_key = env_or(key_var.c_str(), "");
  return c;
}

LiveProvider::LiveProvider(LiveProviderConfig config) : cfg_(std::move(config)) {
  if (cfg_.url.empty()) throw std::invalid_argument("live provider: no endpoint URL configured (URS_PROVIDER_URL)");
  if (cfg_.attempts < 1) cfg_.attempts = 1;
}

std::string LiveProvider::complete(const std::string& prompt) {
  ++calls_;
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.url, m, url_re)) throw std::invalid_argument("live provider: malformed URL " + cfg_.url);
  const std::string origin = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";
  const nlohmann::json body = {
      {"model", cfg_.model}, {"prompt", prompt}, {"max_tokens", cfg_.max_tokens}, {"temperature", cfg_.temperature}};
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  int backoff = cfg_.backoff_ms;
  for (int attempt = 1; attempt <= cfg_.attempts; ++attempt) {
    httplib::Client cli(origin);
    const auto to = std::chrono::milliseconds(cfg_.timeout_ms);
    cli.set_connection_timeout(to);
    cli.set_read_timeout(to);
    cli.set_write_timeout(to);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status >= 400 && res->status < 500 && res->status != 429) break;  // not worth retrying
    } else {
      try {
        return completion_text(nlohmann::json::parse(res->body));
      } catch (const std::exception& e) {
        throw std::runtime_error(std::string("malformed provider response: ") + e.what());
      }
    }
    if (attempt < cfg_.attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw std::runtime_error("provider unreachable after " + std::to_string(cfg_.attempts) + " attempts (" +
                           last_error + ")");
}

CandidateBatch request_candidates(Provider& provider, const std::string& prompt, int k) {
  CandidateBatch out;
  for (int i = 0; i < k; ++i) {
    std::string completion;
    try {
      completion = provider.complete(prompt);
    } catch (const std::exception& e) {
      out.diagnostics.push_back("request " + std::to_string(i + 1) + ": " + e.what());
      continue;
    }
    auto code = extract_candidate(completion);
    if (!code) {
      out.diagnostics.push_back("request " + std::to_string(i + 1) + ": completion holds no generate_mask function");
      continue;
    }
    out.candidates.push_back(CandidateProgram::from_source(std::move(*code)));
  }
  return out;
}

}  // namespace urs
