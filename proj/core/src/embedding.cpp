#include "modeflow/embedding.hpp"

#include <cctype>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "modeflow/digest.hpp"
#include "modeflow/errors.hpp"
#include "modeflow/io.hpp"
#include "modeflow/numeric.hpp"
#include "modeflow/parallel.hpp"

namespace modeflow {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
    return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

void normalize_in_place(std::vector<double>& v, std::string_view what) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw NumericalFailure(fmt::format("{}: cannot normalize a zero or non-finite vector", what));
    }
    for (double& x : v) x /= n;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '_' || c >= 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

MockHashEncoder::MockHashEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw ConfigError("mock encoder dimension must be positive");
}

std::string MockHashEncoder::id() const { return fmt::format("mock-hash:{}:{}", dim_, seed_); }

std::vector<double> MockHashEncoder::token_vector(std::string_view token) const {
    std::uint64_t state = fnv1a(token) ^ (seed_ * 0xd1b54a32d192ed03ULL);
    std::vector<double> v(dim_);
    for (std::size_t i = 0; i < dim_; i += 2) {
        const double u1 = 1.0 - unit_uniform(state);
        const double u2 = unit_uniform(state);
        const double r = std::sqrt(-2.0 * std::log(u1));
        v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
        if (i + 1 < dim_) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    normalize_in_place(v, "mock token vector");
    return v;
}

std::vector<std::vector<double>> MockHashEncoder::encode(const std::vector<std::string>& texts) {
    calls_.fetch_add(1);
    texts_.fetch_add(texts.size());
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> sum(dim_, 0.0);
        auto tokens = tokenize(text);
        if (tokens.empty()) tokens.emplace_back();
        for (const auto& tok : tokens) {
            const auto tv = token_vector(tok);
            for (std::size_t i = 0; i < dim_; ++i) sum[i] += tv[i];
        }
        if (l2_norm(sum) == 0.0) sum = token_vector("");
        normalize_in_place(sum, "mock embedding");
        out.push_back(std::move(sum));
    }
    return out;
}

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(*dir_);
    const auto index_path = *dir_ / "index.json";
    const auto bin_path = *dir_ / "vectors.bin";
    if (std::filesystem::exists(index_path)) {
        const auto index = nlohmann::json::parse(read_text_file(index_path));
        std::ifstream bin(bin_path, std::ios::binary);
        if (!bin) throw IoError(fmt::format("{}: missing vector file", bin_path.string()));
        for (const auto& [key, meta] : index.at("entries").items()) {
            Entry e;
            e.offset = meta.at("offset").get<std::uint64_t>();
            const auto dim = meta.at("dim").get<std::size_t>();
            e.vector.resize(dim);
            bin.seekg(static_cast<std::streamoff>(e.offset));
            bin.read(reinterpret_cast<char*>(e.vector.data()),
                     static_cast<std::streamsize>(dim * sizeof(double)));
            if (!bin) throw IoError(fmt::format("{}: truncated vector file", bin_path.string()));
            next_offset_ = std::max<std::uint64_t>(next_offset_, e.offset + dim * sizeof(double));
            entries_.emplace(key, std::move(e));
        }
    }
    // Drop any tail written after the last index flush.
    if (std::filesystem::exists(bin_path) && std::filesystem::file_size(bin_path) != next_offset_) {
        std::filesystem::resize_file(bin_path, next_offset_);
    }
    bin_.open(bin_path, std::ios::binary | std::ios::app);
    if (!bin_) throw IoError(fmt::format("{}: cannot open for append", bin_path.string()));
}

EmbeddingCache::~EmbeddingCache() {
    try {
        flush();
    } catch (...) {
    }
}

std::optional<std::vector<double>> EmbeddingCache::get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.vector;
}

void EmbeddingCache::put(const std::string& key, const std::vector<double>& vector) {
    std::unique_lock lock(mutex_);
    if (entries_.contains(key)) return;
    Entry e{next_offset_, vector};
    if (dir_) {
        bin_.write(reinterpret_cast<const char*>(vector.data()),
                   static_cast<std::streamsize>(vector.size() * sizeof(double)));
        bin_.flush();
        if (!bin_) throw IoError("embedding cache: write failed");
    }
    next_offset_ += vector.size() * sizeof(double);
    entries_.emplace(key, std::move(e));
    dirty_ = true;
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void EmbeddingCache::flush() {
    std::unique_lock lock(mutex_);
    if (!dir_ || !dirty_) return;
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [key, e] : entries_) {
        entries[key] = {{"offset", e.offset}, {"dim", e.vector.size()}};
    }
    nlohmann::json index = {{"format", 1}, {"entries", std::move(entries)}};
    write_file_atomic(*dir_ / "index.json", index.dump());
    dirty_ = false;
}

std::string embedding_cache_key(std::string_view encoder_id, bool normalized, std::string_view text) {
    std::string material;
    material.reserve(encoder_id.size() + text.size() + 4);
    material.append(encoder_id);
    material.push_back('\0');
    material.push_back(normalized ? '1' : '0');
    material.push_back('\0');
    material.append(text);
    return sha256_hex(material);
}

std::string argument_text(const InvestmentArgument& arg, std::string_view separator) {
    std::string text = arg.rationale;
    text.append(separator);
    text.append(arg.evidence);
    return text;
}

Embedder::Embedder(std::shared_ptr<EncoderBackend> encoder, std::shared_ptr<EmbeddingCache> cache,
                   EmbedderOptions options)
    : encoder_(std::move(encoder)), cache_(std::move(cache)), options_(std::move(options)) {
    if (!encoder_) throw ConfigError("embedder needs an encoder");
    if (!cache_) cache_ = std::make_shared<EmbeddingCache>();
    if (options_.batch_size == 0) options_.batch_size = 1;
}

std::optional<std::size_t> Embedder::dimension() const {
    std::lock_guard lock(dim_mutex_);
    return dim_;
}

void Embedder::check_dimension(std::size_t dim, const std::string& argument_id) {
    std::lock_guard lock(dim_mutex_);
    if (!dim_) {
        if (dim == 0) throw DimensionMismatch(fmt::format("argument {}: encoder returned an empty vector", argument_id));
        dim_ = dim;
    } else if (*dim_ != dim) {
        throw DimensionMismatch(fmt::format("argument {}: encoder returned dimension {}, expected {}",
                                            argument_id, dim, *dim_));
    }
}

std::vector<std::vector<double>> Embedder::encode_texts(const std::vector<std::string>& texts) {
    const int attempts = std::max(1, options_.retry.max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            encoder_calls_.fetch_add(1);
            return encoder_->encode(texts);
        } catch (const BackendUnavailable& e) {
            if (!e.retryable() || attempt >= attempts) throw;
            options_.retry.pause(attempt);
        }
    }
}

ArgumentEmbedding Embedder::embed_argument(const InvestmentArgument& arg) {
    return embed_day({arg}).front();
}

std::vector<ArgumentEmbedding> Embedder::embed_day(const std::vector<InvestmentArgument>& args) {
    std::vector<ArgumentEmbedding> out(args.size());
    std::vector<std::string> keys(args.size());
    std::vector<std::string> texts(args.size());

    // Cache misses, deduplicated by key; each entry lists the argument slots.
    std::vector<std::string> miss_keys;
    std::unordered_map<std::string, std::vector<std::size_t>> miss_slots;
    for (std::size_t i = 0; i < args.size(); ++i) {
        texts[i] = argument_text(args[i], options_.separator);
        keys[i] = embedding_cache_key(encoder_->id(), options_.normalize, texts[i]);
        out[i].argument_id = args[i].argument_id;
        out[i].day = args[i].day;
        out[i].ticker = args[i].ticker;
        if (auto hit = cache_->get(keys[i])) {
            check_dimension(hit->size(), args[i].argument_id);
            out[i].vector = std::move(*hit);
        } else {
            auto& slots = miss_slots[keys[i]];
            if (slots.empty()) miss_keys.push_back(keys[i]);
            slots.push_back(i);
        }
    }

    const std::size_t batches = (miss_keys.size() + options_.batch_size - 1) / options_.batch_size;
    parallel_for(batches, options_.parallelism, [&](std::size_t b) {
        const std::size_t begin = b * options_.batch_size;
        const std::size_t end = std::min(miss_keys.size(), begin + options_.batch_size);
        std::vector<std::string> batch_texts;
        for (std::size_t m = begin; m < end; ++m) batch_texts.push_back(texts[miss_slots.at(miss_keys[m]).front()]);

        std::vector<std::vector<double>> vectors;
        const auto& first_id = args[miss_slots.at(miss_keys[begin]).front()].argument_id;
        try {
            vectors = encode_texts(batch_texts);
        } catch (const BackendUnavailable& e) {
            throw BackendUnavailable(fmt::format("argument {}: {}", first_id, e.what()), e.retryable());
        }
        if (vectors.size() != batch_texts.size()) {
            throw DimensionMismatch(fmt::format("argument {}: encoder returned {} vectors for {} texts",
                                                first_id, vectors.size(), batch_texts.size()));
        }
        for (std::size_t m = begin; m < end; ++m) {
            auto& v = vectors[m - begin];
            const auto& slots = miss_slots.at(miss_keys[m]);
            const auto& id = args[slots.front()].argument_id;
            check_dimension(v.size(), id);
            if (!all_finite(v)) throw NumericalFailure(fmt::format("argument {}: non-finite embedding", id));
            if (options_.normalize) normalize_in_place(v, fmt::format("argument {}", id));
            cache_->put(miss_keys[m], v);
            for (std::size_t slot : slots) out[slot].vector = v;
        }
    });
    return out;
}

}  // namespace modeflow
