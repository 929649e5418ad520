#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "modeflow/extraction.hpp"
#include "modeflow/types.hpp"

namespace modeflow {

struct ArgumentEmbedding {
    std::string argument_id;
    Date day;
    Ticker ticker;
    std::vector<double> vector;

    friend bool operator==(const ArgumentEmbedding&, const ArgumentEmbedding&) = default;
};

class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;
    /// Identifies the model; part of every cache key.
    virtual std::string id() const = 0;
    /// One vector per text, in order. Throws BackendUnavailable.
    virtual std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) = 0;
};

/// Deterministic offline encoder: every token (lower-cased run of
/// alphanumerics or '_') maps to a pseudo-random unit vector seeded by the
/// token's hash; a text embeds as the renormalized sum of its token vectors.
class MockHashEncoder final : public EncoderBackend {
public:
    explicit MockHashEncoder(std::size_t dim = 64, std::uint64_t seed = 0);

    std::string id() const override;
    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override;

    std::vector<double> token_vector(std::string_view token) const;
    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t texts_encoded() const noexcept { return texts_.load(); }

private:
    std::size_t dim_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> texts_{0};
};

std::vector<std::string> tokenize(std::string_view text);

/// Content-addressed vector store. Vectors live in `vectors.bin` (raw doubles,
/// append-only) and `index.json` maps each key to its offset and length.
/// Without a directory the cache is memory-only.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path dir);
    ~EmbeddingCache();

    EmbeddingCache(const EmbeddingCache&) = delete;
    EmbeddingCache& operator=(const EmbeddingCache&) = delete;

    std::optional<std::vector<double>> get(const std::string& key) const;
    void put(const std::string& key, const std::vector<double>& vector);
    std::size_t size() const;
    /// Rewrites index.json atomically. Called by the destructor.
    void flush();

private:
    struct Entry {
        std::uint64_t offset = 0;
        std::vector<double> vector;
    };

    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, Entry> entries_;
    std::uint64_t next_offset_ = 0;
    bool dirty_ = false;
    std::ofstream bin_;
};

/// Key = SHA-256 of (encoder id, normalized flag, text).
std::string embedding_cache_key(std::string_view encoder_id, bool normalized, std::string_view text);

struct EmbedderOptions {
    bool normalize = true;
    std::string separator = "\n";
    std::size_t batch_size = 32;
    std::size_t parallelism = 2;
    RetryPolicy retry;
};

/// Encoder input for one argument: rationale, separator, evidence.
std::string argument_text(const InvestmentArgument& arg, std::string_view separator = "\n");

class Embedder {
public:
    Embedder(std::shared_ptr<EncoderBackend> encoder, std::shared_ptr<EmbeddingCache> cache,
             EmbedderOptions options = {});

    ArgumentEmbedding embed_argument(const InvestmentArgument& arg);
    /// Output order matches input order; batching is invisible to callers.
    std::vector<ArgumentEmbedding> embed_day(const std::vector<InvestmentArgument>& args);

    /// Encoder dimension, pinned by the first successful encoder reply.
    std::optional<std::size_t> dimension() const;
    /// Number of encode() calls issued to the backend by this embedder.
    std::size_t encoder_calls() const noexcept { return encoder_calls_.load(); }
    const EmbedderOptions& options() const noexcept { return options_; }

private:
    std::vector<std::vector<double>> encode_texts(const std::vector<std::string>& texts);
    void check_dimension(std::size_t dim, const std::string& argument_id);

    std::shared_ptr<EncoderBackend> encoder_;
    std::shared_ptr<EmbeddingCache> cache_;
    EmbedderOptions options_;
    mutable std::mutex dim_mutex_;
    std::optional<std::size_t> dim_;
    std::atomic<std::size_t> encoder_calls_{0};
};

}  // namespace modeflow
