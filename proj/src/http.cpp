#include <regex>

#include "mcce/errors.hpp"
#include "mcce/process.hpp"

#ifdef MCCE_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

namespace mcce {

HttpReply http_post(const std::string& url, const std::string& body, const std::string& content_type,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    std::chrono::milliseconds timeout) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, url_re)) throw IoError("malformed URL '" + url + "'");
    const std::string origin = m[1].str();
    const std::string path = m[2].matched ? m[2].str() : "/";

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);
    auto res = client.Post(path, hdrs, body, content_type);
    if (!res) throw IoError("POST " + origin + path + " failed: " + httplib::to_string(res.error()));
    return HttpReply{res->status, res->body};
}

}  // namespace mcce
