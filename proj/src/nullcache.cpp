#include "smoothtest/nullcache.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace smoothtest {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'N', 'U', 'L', 'L', '0', '1'};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t NullCacheKey::digest() const {
    std::uint64_t h = 14695981039346656037ull;
    const auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    mix(&model_hash, sizeof(model_hash));
    mix(stat_descriptor.data(), stat_descriptor.size());
    mix(&n, sizeof(n));
    mix(&R, sizeof(R));
    mix(&seed, sizeof(seed));
    mix(method.data(), method.size());
    return h;
}

std::string NullCacheKey::filename() const { return hex64(digest()) + ".null"; }

void save_null(const std::filesystem::path& path, const NullDistribution& null) {
    nlohmann::json header{
        {"method", null.method},
        {"seed", null.seed},
        {"n", null.n},
        {"replicates", null.requested_replicates},
        {"stored", null.size()},
        {"fit_failures", null.fit_failures},
        {"model_hash", hex64(null.model_hash)},
        {"stat", null.stat_descriptor},
    };
    const std::string hs = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot open cache file for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(null.values.data()),
              static_cast<std::streamsize>(null.values.size() * sizeof(double)));
    if (!out) throw data_error("failed writing cache file: " + path.string());
}

NullDistribution load_null(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open cache file: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw format_error("cache file has an unknown format tag: " + path.string());
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len > (1u << 20)) throw format_error("cache header is corrupt: " + path.string());
    std::string hs(len, '\0');
    in.read(hs.data(), len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception&) {
        throw format_error("cache header is not valid JSON: " + path.string());
    }

    NullDistribution null;
    null.method = header.at("method").get<std::string>();
    null.seed = header.at("seed").get<std::uint64_t>();
    null.n = header.at("n").get<int>();
    null.requested_replicates = header.at("replicates").get<int>();
    null.fit_failures = header.value("fit_failures", 0);
    null.stat_descriptor = header.at("stat").get<std::string>();
    null.model_hash = std::stoull(header.at("model_hash").get<std::string>(), nullptr, 16);
    const int stored = header.at("stored").get<int>();
    null.values.resize(static_cast<std::size_t>(stored));
    in.read(reinterpret_cast<char*>(null.values.data()),
            static_cast<std::streamsize>(null.values.size() * sizeof(double)));
    if (!in) throw format_error("cache payload is truncated: " + path.string());
    return null;
}

std::optional<NullDistribution> try_load_cached(const std::filesystem::path& cache_dir,
                                                const NullCacheKey& key) {
    const auto path = cache_dir / key.filename();
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    NullDistribution null = load_null(path);
    if (null.stat_descriptor != key.stat_descriptor || null.n != key.n ||
        null.requested_replicates != key.R || null.seed != key.seed ||
        null.method != key.method || null.model_hash != key.model_hash)
        return std::nullopt;  // digest collision; treat as a miss
    return null;
}

std::filesystem::path store_cached(const std::filesystem::path& cache_dir,
                                   const NullCacheKey& key, const NullDistribution& null) {
    std::filesystem::create_directories(cache_dir);
    const auto path = cache_dir / key.filename();
    save_null(path, null);
    return path;
}

void export_null_csv(const std::filesystem::path& path, const NullDistribution& null) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot open CSV for writing: " + path.string());
    out << "value,ecdf\n";
    char buf[64];
    const double r = static_cast<double>(null.values.size());
    for (std::size_t i = 0; i < null.values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", null.values[i],
                      static_cast<double>(i + 1) / r);
        out << buf;
    }
}

}  // namespace smoothtest
