#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modeflow/embedding.hpp"
#include "modeflow/extraction.hpp"

namespace modeflow {

/// Environment variables read by `from_environment`.
namespace env {
inline constexpr const char* kChatUrl = "MODEFLOW_CHAT_URL";
inline constexpr const char* kChatKey = "MODEFLOW_CHAT_API_KEY";
inline constexpr const char* kChatModel = "MODEFLOW_CHAT_MODEL";
inline constexpr const char* kEmbedUrl = "MODEFLOW_EMBED_URL";
inline constexpr const char* kEmbedKey = "MODEFLOW_EMBED_API_KEY";
inline constexpr const char* kEmbedModel = "MODEFLOW_EMBED_MODEL";
}  // namespace env

/// scheme://host[:port]/path split for the HTTP client.
struct Endpoint {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;

    /// Throws ConfigError for anything that is not http(s)://host[:port][/path].
    static Endpoint parse(const std::string& url);
    std::string origin() const;
};

struct HttpBackendOptions {
    std::string url;
    std::string api_key;
    std::string model;
    std::chrono::seconds timeout{60};
};

/// Chat-completion client. Sends
/// {"model","messages":[{system},{user}],"temperature":0} and reads
/// choices[0].message.content. Connection failures, 429 and 5xx are
/// retryable BackendUnavailable; other non-2xx statuses are not.
class HttpChatBackend final : public AgentBackend {
public:
    explicit HttpChatBackend(HttpBackendOptions options);
    static std::unique_ptr<HttpChatBackend> from_environment();

    std::string complete(const ChatRequest& request) override;

private:
    HttpBackendOptions options_;
    Endpoint endpoint_;
};

/// Embedding client. Sends {"model","input":[texts]} and accepts either a bare
/// array of float arrays or {"data":[{"embedding":[...]}, ...]}.
class HttpEncoder final : public EncoderBackend {
public:
    explicit HttpEncoder(HttpBackendOptions options);
    static std::unique_ptr<HttpEncoder> from_environment();

    std::string id() const override;
    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override;

private:
    HttpBackendOptions options_;
    Endpoint endpoint_;
};

}  // namespace modeflow
