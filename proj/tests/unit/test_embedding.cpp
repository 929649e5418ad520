#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "modeflow/embedding.hpp"
#include "modeflow/errors.hpp"
#include "modeflow/numeric.hpp"

using namespace modeflow;

namespace {

InvestmentArgument arg(const std::string& day, std::string rationale, std::string evidence, std::size_t idx = 0) {
    const Date d = Date::parse(day);
    return InvestmentArgument::make(d, "AAA", 1, std::move(rationale), std::move(evidence),
                                    make_argument_id(d, "AAA", idx));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("modeflow-embed-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Returns vectors of a configurable width.
class FixedWidthEncoder final : public EncoderBackend {
public:
    explicit FixedWidthEncoder(std::size_t dim) : dim(dim) {}
    std::string id() const override { return "fixed"; }
    std::vector<std::vector<double>> encode(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < texts.size(); ++i) out.emplace_back(dim, 1.0 + static_cast<double>(texts[i].size()));
        return out;
    }
    std::size_t dim;
};

}  // namespace

TEST(MockEncoder, DeterministicUnitVectors) {
    MockHashEncoder a(64), b(64);
    const auto va = a.encode({"alpha\nbeta"});
    const auto vb = b.encode({"alpha\nbeta"});
    EXPECT_EQ(va, vb);
    EXPECT_NEAR(l2_norm(va[0]), 1.0, 1e-12);
    EXPECT_EQ(va[0].size(), 64u);
}

TEST(MockEncoder, SharedThemeTokensRaiseCosine) {
    MockHashEncoder enc(64);
    const auto v = enc.encode({"tag_semis chip demand wafer orders", "tag_semis chip capacity wafer pricing",
                               "tag_banks deposit margin loan book"});
    const double within = dot(v[0], v[1]);
    const double across0 = dot(v[0], v[2]);
    const double across1 = dot(v[1], v[2]);
    EXPECT_GT(within, across0);
    EXPECT_GT(within, across1);
}

TEST(MockEncoder, TokenizerLowercasesAndSplits) {
    EXPECT_EQ(tokenize("P/E at 2.8th, Tag_X"), (std::vector<std::string>{"p", "e", "at", "2", "8th", "tag_x"}));
}

TEST(ArgumentText, JoinsWithSeparator) {
    EXPECT_EQ(argument_text(arg("2024-01-02", "alpha", "beta")), "alpha\nbeta");
    EXPECT_EQ(argument_text(arg("2024-01-02", "alpha", "beta"), " | "), "alpha | beta");
}

TEST(CacheKey, DependsOnEveryComponent) {
    const auto base = embedding_cache_key("enc", true, "text");
    EXPECT_EQ(base.size(), 64u);
    EXPECT_EQ(base, embedding_cache_key("enc", true, "text"));
    EXPECT_NE(base, embedding_cache_key("enc2", true, "text"));
    EXPECT_NE(base, embedding_cache_key("enc", false, "text"));
    EXPECT_NE(base, embedding_cache_key("enc", true, "text "));
}

TEST(Embedder, EmptyInputGivesEmptyOutput) {
    Embedder e(std::make_shared<MockHashEncoder>(16), std::make_shared<EmbeddingCache>());
    EXPECT_TRUE(e.embed_day({}).empty());
    EXPECT_EQ(e.encoder_calls(), 0u);
}

TEST(Embedder, PreservesOrderAndMatchesOneByOne) {
    std::vector<InvestmentArgument> args;
    for (std::size_t i = 0; i < 70; ++i) args.push_back(arg("2024-01-02", "r" + std::to_string(i), "e", i));
    EmbedderOptions opts;
    opts.batch_size = 8;
    opts.parallelism = 3;
    Embedder batched(std::make_shared<MockHashEncoder>(32), std::make_shared<EmbeddingCache>(), opts);
    const auto out = batched.embed_day(args);
    ASSERT_EQ(out.size(), args.size());
    EXPECT_EQ(batched.encoder_calls(), 9u);
    Embedder single(std::make_shared<MockHashEncoder>(32), std::make_shared<EmbeddingCache>());
    for (std::size_t i = 0; i < args.size(); ++i) {
        EXPECT_EQ(out[i].argument_id, args[i].argument_id);
        EXPECT_EQ(out[i].vector, single.embed_argument(args[i]).vector);
        EXPECT_NEAR(l2_norm(out[i].vector), 1.0, 1e-6);
    }
}

TEST(Embedder, IdenticalTextOnAnotherDayHitsCache) {
    auto encoder = std::make_shared<MockHashEncoder>(16);
    Embedder e(encoder, std::make_shared<EmbeddingCache>());
    const auto first = e.embed_day({arg("2024-01-02", "same", "text")});
    const auto second = e.embed_day({arg("2024-01-03", "same", "text")});
    EXPECT_EQ(first[0].vector, second[0].vector);
    EXPECT_EQ(encoder->texts_encoded(), 1u);
}

TEST(Embedder, DuplicateTextsInOneDayEncodeOnce) {
    auto encoder = std::make_shared<MockHashEncoder>(16);
    Embedder e(encoder, std::make_shared<EmbeddingCache>());
    e.embed_day({arg("2024-01-02", "a", "b", 0), arg("2024-01-02", "a", "b", 1), arg("2024-01-02", "c", "d", 2)});
    EXPECT_EQ(encoder->texts_encoded(), 2u);
}

TEST(Embedder, UnnormalizedVectorsPassThrough) {
    EmbedderOptions opts;
    opts.normalize = false;
    Embedder e(std::make_shared<FixedWidthEncoder>(3), std::make_shared<EmbeddingCache>(), opts);
    EXPECT_EQ(e.embed_argument(arg("2024-01-02", "a", "b")).vector, (std::vector<double>(3, 4.0)));
}

TEST(Embedder, PinsDimension) {
    auto encoder = std::make_shared<FixedWidthEncoder>(4);
    Embedder e(encoder, std::make_shared<EmbeddingCache>());
    e.embed_argument(arg("2024-01-02", "a", "b"));
    EXPECT_EQ(e.dimension(), 4u);
    encoder->dim = 5;
    EXPECT_THROW(e.embed_argument(arg("2024-01-02", "other", "text")), DimensionMismatch);
}

TEST(EmbeddingCache, PersistsAcrossInstances) {
    TempDir dir;
    std::vector<InvestmentArgument> args{arg("2024-01-02", "a", "b", 0), arg("2024-01-02", "c", "d", 1)};
    std::vector<ArgumentEmbedding> first;
    {
        auto cache = std::make_shared<EmbeddingCache>(dir.path());
        Embedder e(std::make_shared<MockHashEncoder>(8), cache);
        first = e.embed_day(args);
    }
    auto encoder = std::make_shared<MockHashEncoder>(8);
    auto cache = std::make_shared<EmbeddingCache>(dir.path());
    EXPECT_EQ(cache->size(), 2u);
    Embedder e(encoder, cache);
    EXPECT_EQ(e.embed_day(args), first);
    EXPECT_EQ(e.encoder_calls(), 0u);
    EXPECT_EQ(encoder->calls(), 0u);
}

TEST(EmbeddingCache, IgnoresVectorsWrittenAfterLastIndexFlush) {
    TempDir dir;
    {
        EmbeddingCache cache(dir.path());
        cache.put("k1", {1.0, 2.0});
    }
    {
        std::ofstream bin(dir.path() / "vectors.bin", std::ios::binary | std::ios::app);
        const double junk[3] = {9.0, 9.0, 9.0};
        bin.write(reinterpret_cast<const char*>(junk), sizeof junk);
    }
    EmbeddingCache reopened(dir.path());
    EXPECT_EQ(reopened.get("k1"), (std::vector<double>{1.0, 2.0}));
    reopened.put("k2", {3.0});
    reopened.flush();
    EmbeddingCache again(dir.path());
    EXPECT_EQ(again.get("k2"), (std::vector<double>{3.0}));
    EXPECT_EQ(again.size(), 2u);
}
