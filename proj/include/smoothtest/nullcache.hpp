#pragma once

#include <filesystem>
#include <optional>

#include "smoothtest/resample.hpp"

namespace smoothtest {

// Cache key for a simulated null distribution. The model hash already folds
// in the basis kind, size and (for K2) the reference identity.
struct NullCacheKey {
    std::uint64_t model_hash = 0;
    std::string stat_descriptor;
    int n = 0;
    int R = 0;
    std::uint64_t seed = 0;
    std::string method;

    std::uint64_t digest() const;
    std::string filename() const;  // "<hex digest>.null"
};

// Binary container: magic "STNULL01", little-endian u32 JSON header length,
// JSON header, then the sorted values as little-endian 64-bit floats.
void save_null(const std::filesystem::path& path, const NullDistribution& null);
NullDistribution load_null(const std::filesystem::path& path);

std::optional<NullDistribution> try_load_cached(const std::filesystem::path& cache_dir,
                                                const NullCacheKey& key);
std::filesystem::path store_cached(const std::filesystem::path& cache_dir,
                                   const NullCacheKey& key, const NullDistribution& null);

// Plot-ready export: one "value,ecdf" row per replicate.
void export_null_csv(const std::filesystem::path& path, const NullDistribution& null);

}  // namespace smoothtest
