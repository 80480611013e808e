// cpp-httplib is compiled in this translation unit only.
#include <httplib.h>

#include "spdiv/backends.hpp"

namespace spdiv {

namespace {

struct ParsedUrl {
    std::string scheme_host_port;
    std::string prefix;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint", "endpoint must start with http:// or https://: '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.scheme_host_port = url.substr(0, path_start);
    if (path_start != std::string::npos) out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

}  // namespace

HttpTransport::HttpTransport(std::string base_url, std::string api_key,
                             std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), timeout_(timeout) {
    (void)split_url(base_url_);
}

nlohmann::json HttpTransport::post(const std::string& path, const nlohmann::json& body) {
    const auto url = split_url(base_url_);
    std::string full_path = path;
    // "http://host/v1" + "/v1/chat/completions" should not double the prefix
    if (!url.prefix.empty() && full_path.rfind(url.prefix, 0) != 0) full_path = url.prefix + path;

    httplib::Client client(url.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    client.set_connection_timeout(secs);
    client.set_read_timeout(secs);
    client.set_write_timeout(secs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(full_path, headers, body.dump(), "application/json");
    if (!res)
        throw TransportError("POST " + base_url_ + full_path + " failed: " +
                             httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("POST " + base_url_ + full_path + " returned HTTP " +
                             std::to_string(res->status) + ": " + res->body.substr(0, 512));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError("response from " + base_url_ + full_path + " is not JSON: " + e.what());
    }
}

}  // namespace spdiv
