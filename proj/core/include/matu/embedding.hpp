#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

namespace matu {

// One step text mapped into the shared latent space.
struct EmbeddingVector {
  Eigen::VectorXd values;
  std::string model_id;
  int reduced_dim = 0;  // == values.size(); tracks truncation state
};

using CacheKey = std::array<std::uint8_t, 32>;

// SHA-256 over (model_id, raw-vector marker, text). Keys address
// pre-reduction vectors, so the target dimension never invalidates a cache.
CacheKey cache_key(const std::string& model_id, const std::string& text);

// In-memory store of raw full-dimension vectors, keyed by content hash.
// Concurrent readers, serialized writers; entries are immutable once added.
class EmbeddingCache {
public:
  bool contains(const CacheKey& key) const;
  // Returns false when absent; fills model_id/values otherwise.
  bool lookup(const CacheKey& key, std::string& model_id,
              std::vector<float>& values) const;
  void put(const CacheKey& key, std::string model_id,
           std::vector<float> values);
  std::size_t size() const;

  // Binary cache file: magic "MATUCACH", version, count, then per entry the
  // 32-byte key, model_id, dim, f32 values and a CRC32. Loading is
  // idempotent; save writes entries in key order so bytes are reproducible.
  // Throws CorruptCacheFile on framing or checksum failure.
  void load_file(const std::string& path);
  void save_file(const std::string& path) const;

private:
  struct Entry {
    std::string model_id;
    std::vector<float> values;
  };
  mutable std::shared_mutex mutex_;
  std::map<CacheKey, Entry> entries_;
};

// Keeps the first d_target coordinates, then scales to unit L2 norm.
// Idempotent at fixed d_target. Throws ZeroVector when the kept prefix has
// norm below 1e-12.
EmbeddingVector reduce_and_normalize(const EmbeddingVector& v, int d_target);

struct EmbedServiceConfig {
  std::string url;           // empty = offline, cache must cover all keys
  std::string model_id = "qwen3-embedding-0.6b";
  int batch_size = 64;
  int max_attempts = 3;
  int backoff_initial_ms = 500;  // doubles per retry
  std::string auth_token;        // filled from MATU_EMBED_TOKEN when present
};

// Maps texts to full-dimension vectors, cache first, remote service for the
// rest. Output order matches input order; every remote result is written to
// the cache before return.
class EmbeddingGateway {
public:
  EmbeddingGateway(EmbedServiceConfig config,
                   std::shared_ptr<EmbeddingCache> cache);
  ~EmbeddingGateway();

  // Throws ServiceUnavailable after bounded retries (or immediately in
  // offline mode when a key is missing, naming that key's text) and
  // DimensionMismatch when one batch returns inconsistent vector lengths.
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts);

  const EmbedServiceConfig& config() const { return config_; }
  EmbeddingCache& cache() { return *cache_; }

private:
  std::vector<std::vector<float>> fetch_batch(
      const std::vector<std::string>& texts);

  EmbedServiceConfig config_;
  std::shared_ptr<EmbeddingCache> cache_;
};

std::string hex_key(const CacheKey& key);

}  // namespace matu
