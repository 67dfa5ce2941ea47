#include "matu/embedding.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>
#include <unordered_map>

#include <openssl/sha.h>

#include "binio.hpp"
#include "httplib.h"
#include "matu/errors.hpp"
#include "json.hpp"

namespace matu {

using nlohmann::json;

CacheKey cache_key(const std::string& model_id, const std::string& text) {
  // The \0 separators and the fixed "raw" marker keep (model, text) pairs
  // from colliding under concatenation.
  std::string buf;
  buf.reserve(model_id.size() + text.size() + 6);
  buf += model_id;
  buf += '\0';
  buf += "raw";
  buf += '\0';
  buf += text;
  CacheKey key{};
  SHA256(reinterpret_cast<const unsigned char*>(buf.data()), buf.size(),
         key.data());
  return key;
}

std::string hex_key(const CacheKey& key) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : key) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

bool EmbeddingCache::contains(const CacheKey& key) const {
  std::shared_lock lock(mutex_);
  return entries_.count(key) != 0;
}

bool EmbeddingCache::lookup(const CacheKey& key, std::string& model_id,
                            std::vector<float>& values) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  model_id = it->second.model_id;
  values = it->second.values;
  return true;
}

void EmbeddingCache::put(const CacheKey& key, std::string model_id,
                         std::vector<float> values) {
  std::unique_lock lock(mutex_);
  entries_.insert_or_assign(key, Entry{std::move(model_id), std::move(values)});
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

namespace {
constexpr char kCacheMagic[8] = {'M', 'A', 'T', 'U', 'C', 'A', 'C', 'H'};
constexpr std::uint32_t kCacheVersion = 1;
}  // namespace

void EmbeddingCache::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptCacheFile(0, "cannot open cache file " + path);
  const std::uint64_t count = binio::read_header(in, kCacheMagic, kCacheVersion);

  std::map<CacheKey, Entry> loaded;
  for (std::uint64_t i = 0; i < count; ++i) {
    binio::EntryReader entry(in);
    CacheKey key{};
    entry.bytes(key.data(), key.size());
    Entry e;
    e.model_id = entry.str();
    const std::uint32_t dim = entry.u32();
    if (dim == 0 || dim > (1u << 24))
      throw CorruptCacheFile(entry.offset(), "implausible vector dimension");
    e.values.resize(dim);
    entry.bytes(e.values.data(), dim * sizeof(float));
    entry.verify_crc();
    loaded.emplace(key, std::move(e));
  }

  std::unique_lock lock(mutex_);
  for (auto& [key, e] : loaded) entries_.insert_or_assign(key, std::move(e));
}

void EmbeddingCache::save_file(const std::string& path) const {
  std::shared_lock lock(mutex_);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("IoError", "cannot write cache file " + path);
  binio::write_header(out, kCacheMagic, kCacheVersion, entries_.size());
  for (const auto& [key, e] : entries_) {  // std::map: key order, stable bytes
    binio::EntryWriter entry;
    entry.bytes(key.data(), key.size());
    entry.str(e.model_id);
    entry.u32(static_cast<std::uint32_t>(e.values.size()));
    entry.bytes(e.values.data(), e.values.size() * sizeof(float));
    entry.finish(out);
  }
  if (!out) throw DataError("IoError", "short write to cache file " + path);
}

EmbeddingVector reduce_and_normalize(const EmbeddingVector& v, int d_target) {
  if (d_target < 1 || d_target > v.values.size()) {
    throw DimensionMismatch("d_target " + std::to_string(d_target) +
                            " outside [1, " + std::to_string(v.values.size()) +
                            "]");
  }
  Eigen::VectorXd head = v.values.head(d_target);
  const double norm = head.norm();
  if (norm < 1e-12) {
    throw ZeroVector("vector prefix of length " + std::to_string(d_target) +
                     " has near-zero norm");
  }
  EmbeddingVector out;
  out.values = head / norm;
  out.model_id = v.model_id;
  out.reduced_dim = d_target;
  return out;
}

EmbeddingGateway::EmbeddingGateway(EmbedServiceConfig config,
                                   std::shared_ptr<EmbeddingCache> cache)
    : config_(std::move(config)), cache_(std::move(cache)) {
  if (config_.auth_token.empty()) {
    if (const char* tok = std::getenv("MATU_EMBED_TOKEN")) {
      config_.auth_token = tok;
    }
  }
}

EmbeddingGateway::~EmbeddingGateway() = default;

std::vector<std::vector<float>> EmbeddingGateway::fetch_batch(
    const std::vector<std::string>& texts) {
  json body;
  body["model"] = config_.model_id;
  body["input"] = texts;
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + config_.auth_token);

  std::string last_error = "no attempt made";
  int delay_ms = config_.backoff_initial_ms;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms *= 2;
    }
    httplib::Client client(config_.url);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    auto res = client.Post("/", headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::exception& e) {
      last_error = std::string("bad response body: ") + e.what();
      continue;
    }
    if (!parsed.contains("data") || !parsed["data"].is_array() ||
        parsed["data"].size() != texts.size()) {
      last_error = "response data count does not match request";
      continue;
    }
    std::vector<std::vector<float>> vectors(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (const json& item : parsed["data"]) {
      const auto idx = item.at("index").get<std::size_t>();
      if (idx >= texts.size() || filled[idx]) {
        last_error = "response index out of range";
        vectors.clear();
        break;
      }
      vectors[idx] = item.at("embedding").get<std::vector<float>>();
      filled[idx] = true;
    }
    if (vectors.empty()) continue;
    const std::size_t dim = vectors.front().size();
    for (const auto& v : vectors) {
      if (v.size() != dim || dim == 0) {
        throw DimensionMismatch(
            "embedding service returned inconsistent vector lengths within "
            "one batch (" +
            std::to_string(v.size()) + " vs " + std::to_string(dim) + ")");
      }
    }
    return vectors;
  }
  throw ServiceUnavailable("embedding service at " + config_.url +
                           " unavailable after " +
                           std::to_string(config_.max_attempts) +
                           " attempts: " + last_error);
}

std::vector<EmbeddingVector> EmbeddingGateway::embed_texts(
    const std::vector<std::string>& texts) {
  // Resolve cache hits and dedupe misses; duplicates cost one fetch.
  std::vector<CacheKey> keys(texts.size());
  std::vector<std::string> missing_texts;
  std::unordered_map<std::string, std::size_t> missing_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = cache_key(config_.model_id, texts[i]);
    if (!cache_->contains(keys[i]) && !missing_index.count(texts[i])) {
      missing_index.emplace(texts[i], missing_texts.size());
      missing_texts.push_back(texts[i]);
    }
  }

  if (!missing_texts.empty()) {
    if (config_.url.empty()) {
      const std::string& first = missing_texts.front();
      throw ServiceUnavailable(
          "offline mode: " + std::to_string(missing_texts.size()) +
          " text(s) missing from cache; first missing key " +
          hex_key(cache_key(config_.model_id, first)) + " for text \"" + first +
          "\"");
    }
    const auto batch = static_cast<std::size_t>(std::max(1, config_.batch_size));
    for (std::size_t start = 0; start < missing_texts.size(); start += batch) {
      const std::size_t end = std::min(start + batch, missing_texts.size());
      std::vector<std::string> chunk(missing_texts.begin() + start,
                                     missing_texts.begin() + end);
      auto vectors = fetch_batch(chunk);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        cache_->put(cache_key(config_.model_id, chunk[i]), config_.model_id,
                    std::move(vectors[i]));
      }
    }
  }

  std::vector<EmbeddingVector> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::string model_id;
    std::vector<float> values;
    if (!cache_->lookup(keys[i], model_id, values)) {
      throw ServiceUnavailable("embedding for text \"" + texts[i] +
                               "\" missing after fetch");
    }
    EmbeddingVector& v = out[i];
    v.model_id = std::move(model_id);
    v.values.resize(static_cast<Eigen::Index>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j)
      v.values(static_cast<Eigen::Index>(j)) = static_cast<double>(values[j]);
    v.reduced_dim = static_cast<int>(values.size());
  }
  return out;
}

}  // namespace matu
