#include "wsindex/eutils.hpp"

#include <httplib.h>

#include <boost/property_tree/detail/rapidxml.hpp>
#include <cstdlib>
#include <thread>
#include <unordered_map>

namespace wsindex {

namespace rx = boost::property_tree::detail::rapidxml;

RateLimiter::RateLimiter(double requests_per_second)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(requests_per_second > 0 ? 1.0 / requests_per_second
                                                                : 0.0))),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  const auto now = std::chrono::steady_clock::now();
  if (next_ > now) {
    const auto wait = next_ - now;
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
    next_ += interval_;
  } else {
    next_ = now + interval_;
  }
}

EutilsConfig EutilsConfig::from_env() {
  EutilsConfig cfg;
  if (const char* k = std::getenv("NCBI_API_KEY"); k && *k) {
    cfg.api_key = k;
    cfg.requests_per_second = 10.0;
  }
  if (const char* r = std::getenv("NCBI_RATE_LIMIT"); r && *r) {
    cfg.requests_per_second = std::atof(r);
  }
  if (const char* e = std::getenv("EUTILS_ENDPOINT"); e && *e) cfg.endpoint = e;
  return cfg;
}

struct EutilsClient::Impl {
  std::unique_ptr<httplib::Client> http;
  std::string base_path;
};

EutilsClient::EutilsClient(EutilsConfig cfg)
    : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()), limiter_(cfg_.requests_per_second) {
  // split "scheme://host[:port]/base" into the client origin and path prefix
  const auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint must be an absolute URL: " + cfg_.endpoint);
  const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
  const std::string origin =
      path_start == std::string::npos ? cfg_.endpoint : cfg_.endpoint.substr(0, path_start);
  impl_->base_path = path_start == std::string::npos ? "" : cfg_.endpoint.substr(path_start);
  while (!impl_->base_path.empty() && impl_->base_path.back() == '/') impl_->base_path.pop_back();
  impl_->http = std::make_unique<httplib::Client>(origin);
  impl_->http->set_connection_timeout(cfg_.timeout);
  impl_->http->set_read_timeout(cfg_.timeout);
  impl_->http->set_follow_location(true);
}

EutilsClient::~EutilsClient() = default;

std::string EutilsClient::get(const std::string& tool,
                              const std::multimap<std::string, std::string>& params) {
  return send(false, tool, params);
}

std::string EutilsClient::post(const std::string& tool,
                               const std::multimap<std::string, std::string>& params) {
  return send(true, tool, params);
}

std::string EutilsClient::send(bool is_post, const std::string& tool,
                               std::multimap<std::string, std::string> params) {
  if (!cfg_.api_key.empty()) params.emplace("api_key", cfg_.api_key);
  const std::string path = impl_->base_path + "/" + tool;
  httplib::Params hp(params.begin(), params.end());

  std::lock_guard lock(in_flight_);
  std::string last_error;
  auto backoff = cfg_.initial_backoff;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    limiter_.acquire();
    ++requests_;
    httplib::Result res = is_post ? impl_->http->Post(path, hp)
                                  : impl_->http->Get(path, hp, httplib::Headers{});
    if (res) {
      if (res->status == 200) return res->body;
      last_error = "HTTP " + std::to_string(res->status) + " from " + tool;
      const bool transient = res->status == 429 || res->status >= 500;
      if (!transient) throw NetworkError(last_error);
    } else {
      last_error = "request to " + tool + " failed: " + httplib::to_string(res.error());
    }
    if (attempt < cfg_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw NetworkError(last_error + " (after " + std::to_string(cfg_.max_attempts) + " attempts)");
}

std::string descriptor_query(const std::string& descriptor_id) {
  return descriptor_id + "[mh]";
}

namespace {

struct SearchPage {
  std::size_t count = 0;
  std::vector<std::string> ids;
};

SearchPage parse_esearch(const std::string& body) {
  std::vector<char> buf(body.begin(), body.end());
  buf.push_back('\0');
  rx::xml_document<char> doc;
  try {
    doc.parse<rx::parse_validate_closing_tags>(buf.data());
  } catch (const rx::parse_error& e) {
    const char* where = e.where<char>();
    throw ParseError(std::string("malformed esearch response: ") + e.what(),
                     where ? static_cast<std::size_t>(where - buf.data()) : 0,
                     ParseError::Unit::Byte);
  }
  const auto* root = doc.first_node("eSearchResult");
  if (!root) throw Error("malformed esearch response: no eSearchResult element");
  if (const auto* err = root->first_node("ERROR")) {
    throw NetworkError("esearch error: " + std::string(err->value(), err->value_size()));
  }
  const auto* count = root->first_node("Count");
  if (!count) throw Error("malformed esearch response: no Count element");
  SearchPage page;
  try {
    page.count = std::stoull(std::string(count->value(), count->value_size()));
  } catch (const std::exception&) {
    throw Error("malformed esearch response: bad Count");
  }
  if (const auto* list = root->first_node("IdList")) {
    for (const auto* id = list->first_node("Id"); id; id = id->next_sibling("Id")) {
      page.ids.emplace_back(id->value(), id->value_size());
    }
  }
  return page;
}

}  // namespace

std::vector<std::string> search_pmids(EutilsClient& client, const std::string& term,
                                      std::size_t page_size) {
  if (page_size == 0 || page_size > 10000) throw Error("page_size must be in [1, 10000]");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t retstart = 0;
  for (;;) {
    const auto body = client.get("esearch.fcgi", {{"db", "pubmed"},
                                                  {"term", term},
                                                  {"retmode", "xml"},
                                                  {"retstart", std::to_string(retstart)},
                                                  {"retmax", std::to_string(page_size)}});
    const auto page = parse_esearch(body);
    for (const auto& id : page.ids) {
      if (seen.insert(id).second) out.push_back(id);
    }
    retstart += page_size;
    if (page.ids.empty() || retstart >= page.count) break;
  }
  return out;
}

FetchResult fetch_articles(EutilsClient& client, const std::vector<std::string>& pmids,
                           std::size_t batch_size, const std::unordered_set<std::string>& skip,
                           const BatchCallback& on_batch) {
  if (batch_size == 0 || batch_size > 500) throw Error("batch_size must be in [1, 500]");
  std::vector<std::string> todo;
  std::unordered_set<std::string> queued;
  for (const auto& p : pmids) {
    if (!skip.contains(p) && queued.insert(p).second) todo.push_back(p);
  }

  std::unordered_map<std::string, Article> got;
  FetchResult result;
  const std::size_t start_requests = client.requests_sent();
  auto assemble = [&] {
    result.corpus.articles.clear();
    result.missing.clear();
    for (const auto& p : todo) {
      if (auto it = got.find(p); it != got.end()) {
        result.corpus.articles.push_back(it->second);
      }
    }
    result.requests = client.requests_sent() - start_requests;
  };

  for (std::size_t begin = 0; begin < todo.size(); begin += batch_size) {
    const std::size_t end = std::min(todo.size(), begin + batch_size);
    std::string ids;
    for (std::size_t i = begin; i < end; ++i) {
      if (i > begin) ids.push_back(',');
      ids += todo[i];
    }
    std::string body;
    try {
      body = client.post("efetch.fcgi", {{"db", "pubmed"}, {"retmode", "xml"}, {"id", ids}});
    } catch (const NetworkError& e) {
      assemble();
      const std::string msg = std::string(e.what()) + "; fetched " +
                              std::to_string(result.corpus.size()) + " of " +
                              std::to_string(todo.size()) +
                              " before the failing batch starting at " + todo[begin];
      throw FetchError(msg, std::move(result));
    }
    auto parsed = parse_medline_xml(body);
    std::vector<Article> batch;
    const std::unordered_set<std::string> wanted(todo.begin() + begin, todo.begin() + end);
    for (auto& a : parsed.articles) {
      if (wanted.contains(a.pmid) && !got.contains(a.pmid)) {
        batch.push_back(a);
        got.emplace(a.pmid, std::move(a));
      }
    }
    for (auto& r : parsed.rejected) result.rejected.push_back(std::move(r));
    if (on_batch) on_batch(batch);
  }
  assemble();
  for (const auto& p : todo) {
    if (!got.contains(p)) result.missing.push_back(p);
  }
  return result;
}

}  // namespace wsindex
