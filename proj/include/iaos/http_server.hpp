#pragma once

// Binds the session handlers to cpp-httplib.

#include <httplib.h>

#include <string>

#include "iaos/session.hpp"

namespace iaos {

inline Request to_request(const httplib::Request& req) {
  Request r{req.method, req.path, {}, req.body};
  for (const auto& [k, v] : req.params) r.query.emplace(k, v);  // first value wins
  return r;
}

inline void install_routes(httplib::Server& server, SessionState& session) {
  auto forward = [&session](const httplib::Request& req, httplib::Response& res) {
    const Response out = handle(session, to_request(req));
    res.status = out.status;
    for (const auto& [k, v] : out.headers) res.set_header(k, v);
    if (out.status == 200 && req.method == "GET" && req.path.rfind("/estimate/", 0) != 0)
      res.set_header("Cache-Control", "public, max-age=31536000, immutable");
    res.set_content(out.body, out.content_type);
  };
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
}

}  // namespace iaos
