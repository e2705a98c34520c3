#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

namespace mcce {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

/// Runs argv[0] (PATH lookup) with `input` on stdin and collects stdout/stderr.
/// The child is killed when the timeout elapses. Throws IoError when the
/// process cannot be spawned.
ProcessResult run_process(const std::vector<std::string>& argv, std::string_view input,
                          std::chrono::milliseconds timeout);

/// Whitespace split; no quoting rules.
std::vector<std::string> split_command(std::string_view command);

struct HttpReply {
    int status = 0;
    std::string body;
};

/// POST `body` to an http(s) URL. Transport failures throw IoError.
HttpReply http_post(const std::string& url, const std::string& body, const std::string& content_type,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    std::chrono::milliseconds timeout);

}  // namespace mcce
