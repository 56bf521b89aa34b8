#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include "wsindex/error.hpp"
#include "wsindex/ingest.hpp"

namespace wsindex {

/// Token bucket with capacity one: consecutive `acquire()` calls are spaced
/// at least 1/rate seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
};

struct EutilsConfig {
  std::string endpoint = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
  std::string api_key;
  double requests_per_second = 3.0;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{60};

  /// Reads NCBI_API_KEY, NCBI_RATE_LIMIT and EUTILS_ENDPOINT when set.
  static EutilsConfig from_env();
};

/// Client for the esearch/efetch endpoints. At most one request is in flight
/// per client, and requests are spaced by the rate limiter.
class EutilsClient {
 public:
  explicit EutilsClient(EutilsConfig cfg);
  ~EutilsClient();

  EutilsClient(const EutilsClient&) = delete;
  EutilsClient& operator=(const EutilsClient&) = delete;

  /// GET `<endpoint>/<tool>` with retries on transient failures.
  std::string get(const std::string& tool, const std::multimap<std::string, std::string>& params);
  /// Form-encoded POST, used for long id lists.
  std::string post(const std::string& tool, const std::multimap<std::string, std::string>& params);

  std::size_t requests_sent() const { return requests_; }
  const EutilsConfig& config() const { return cfg_; }

 private:
  std::string send(bool is_post, const std::string& tool,
                   std::multimap<std::string, std::string> params);

  struct Impl;
  EutilsConfig cfg_;
  std::unique_ptr<Impl> impl_;
  RateLimiter limiter_;
  std::mutex in_flight_;
  std::size_t requests_ = 0;
};

/// Default esearch term for a descriptor id.
std::string descriptor_query(const std::string& descriptor_id);

/// Complete, de-duplicated pmid list for `term`, paged with retstart/retmax.
std::vector<std::string> search_pmids(EutilsClient& client, const std::string& term,
                                      std::size_t page_size);

struct FetchResult {
  Corpus corpus;
  /// Requested pmids for which no record came back.
  std::vector<std::string> missing;
  std::vector<std::string> rejected;
  std::size_t requests = 0;
};

/// Raised when a batch still fails after retries; carries what was fetched.
class FetchError : public NetworkError {
 public:
  FetchError(const std::string& what, FetchResult partial)
      : NetworkError(what), partial_(std::move(partial)) {}
  const FetchResult& partial() const { return partial_; }

 private:
  FetchResult partial_;
};

using BatchCallback = std::function<void(const std::vector<Article>& batch)>;

/// Fetches records in batches of `batch_size` (1..500). Pmids in `skip` are
/// not requested, which makes an interrupted fetch resumable. Articles are
/// returned in the order of `pmids` regardless of batch size.
FetchResult fetch_articles(EutilsClient& client, const std::vector<std::string>& pmids,
                           std::size_t batch_size,
                           const std::unordered_set<std::string>& skip = {},
                           const BatchCallback& on_batch = {});

}  // namespace wsindex
