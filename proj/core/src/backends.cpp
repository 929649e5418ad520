#include "modeflow/backends.hpp"

#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "modeflow/errors.hpp"

namespace modeflow {

using nlohmann::json;

namespace {

std::string getenv_or(const char* name, std::string fallback = {}) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

httplib::Result post_json(const Endpoint& endpoint, const HttpBackendOptions& options,
                          const json& body) {
    httplib::Client client(endpoint.origin());
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    client.set_write_timeout(options.timeout);
    httplib::Headers headers;
    if (!options.api_key.empty()) headers.emplace("Authorization", "Bearer " + options.api_key);
    return client.Post(endpoint.path, headers, body.dump(), "application/json");
}

json checked_body(const httplib::Result& res, const std::string& what) {
    if (!res) {
        throw BackendUnavailable(fmt::format("{}: {}", what, httplib::to_string(res.error())), true);
    }
    const int status = res->status;
    if (status == 429 || status >= 500) {
        throw BackendUnavailable(fmt::format("{}: HTTP {}", what, status), true);
    }
    if (status < 200 || status >= 300) {
        throw BackendUnavailable(fmt::format("{}: HTTP {}: {}", what, status, res->body), false);
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw BackendUnavailable(fmt::format("{}: malformed response body: {}", what, e.what()), false);
    }
}

}  // namespace

Endpoint Endpoint::parse(const std::string& url) {
    static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw ConfigError(fmt::format("invalid endpoint URL '{}'", url));
    Endpoint e;
    e.scheme = m[1];
    e.host = m[2];
    e.port = m[3].matched ? std::stoi(m[3]) : (e.scheme == "https" ? 443 : 80);
    e.path = m[4].matched ? std::string(m[4]) : "/";
    return e;
}

std::string Endpoint::origin() const { return fmt::format("{}://{}:{}", scheme, host, port); }

HttpChatBackend::HttpChatBackend(HttpBackendOptions options)
    : options_(std::move(options)), endpoint_(Endpoint::parse(options_.url)) {}

std::unique_ptr<HttpChatBackend> HttpChatBackend::from_environment() {
    HttpBackendOptions o;
    o.url = getenv_or(env::kChatUrl);
    if (o.url.empty()) throw ConfigError(fmt::format("{} is not set", env::kChatUrl));
    o.api_key = getenv_or(env::kChatKey);
    o.model = getenv_or(env::kChatModel, "deepseek-chat");
    return std::make_unique<HttpChatBackend>(std::move(o));
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
    json body = {
        {"model", options_.model},
        {"temperature", 0},
        {"messages", json::array({{{"role", "system"}, {"content", request.system_prompt}},
                                  {{"role", "user"}, {"content", request.user_prompt}}})},
    };
    const json reply = checked_body(post_json(endpoint_, options_, body), "chat backend");
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendUnavailable(fmt::format("chat backend: unexpected envelope: {}", e.what()), false);
    }
}

HttpEncoder::HttpEncoder(HttpBackendOptions options)
    : options_(std::move(options)), endpoint_(Endpoint::parse(options_.url)) {}

std::unique_ptr<HttpEncoder> HttpEncoder::from_environment() {
    HttpBackendOptions o;
    o.url = getenv_or(env::kEmbedUrl);
    if (o.url.empty()) throw ConfigError(fmt::format("{} is not set", env::kEmbedUrl));
    o.api_key = getenv_or(env::kEmbedKey);
    o.model = getenv_or(env::kEmbedModel, "qwen3-embedding-8b");
    return std::make_unique<HttpEncoder>(std::move(o));
}

std::string HttpEncoder::id() const { return fmt::format("http:{}:{}", options_.url, options_.model); }

std::vector<std::vector<double>> HttpEncoder::encode(const std::vector<std::string>& texts) {
    json body = {{"model", options_.model}, {"input", texts}};
    const json reply = checked_body(post_json(endpoint_, options_, body), "encoder backend");
    std::vector<std::vector<double>> out;
    try {
        const json& rows = reply.is_array() ? reply : reply.at("data");
        for (const auto& row : rows) {
            const json& vec = row.is_array() ? row : row.at("embedding");
            out.push_back(vec.get<std::vector<double>>());
        }
    } catch (const json::exception& e) {
        throw BackendUnavailable(fmt::format("encoder backend: unexpected envelope: {}", e.what()), false);
    }
    if (out.size() != texts.size()) {
        throw BackendUnavailable(
            fmt::format("encoder backend returned {} vectors for {} texts", out.size(), texts.size()),
            false);
    }
    return out;
}

}  // namespace modeflow
