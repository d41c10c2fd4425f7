#include "mlasr/harness/server.h"

#include <cstdlib>

#include <fmt/format.h>

#include "httplib.h"
#include "json.hpp"
#include "mlasr/common/error.h"

namespace mlasr::harness {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kJson = "application/json";
constexpr const char* kJsonLines = "application/x-ndjson";

void Reply(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void Reject(httplib::Response& res, int status, const std::string& reason) {
  Reply(res, status, ordered_json{{"accepted", false}, {"error", reason}});
}

std::string AuditLine(const train::AuditEntry& a) {
  ordered_json j;
  j["submitted_after_step"] = a.submitted_after_step;
  j["effective_step"] = a.effective_step;
  j["weights"] = a.weights;
  j["changed"] = a.changed;
  j["source"] = a.source;
  return j.dump();
}

double Weight(const json& v, const std::string& what) {
  if (!v.is_number()) throw UsageError(fmt::format("weight for {} is not a number", what));
  return v.get<double>();
}

}  // namespace

train::MixingSchedule ParseMixingRequest(std::string_view body,
                                         const train::LanguageTable& languages) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("body is not JSON: {}", e.what()));
  }
  if (!j.is_object()) throw UsageError("body must be a JSON object");
  train::MixingSchedule s;
  const auto n = static_cast<std::size_t>(languages.size());
  if (j.contains("boost")) {
    const auto& b = j["boost"];
    if (!b.is_object() || !b.contains("language") || !b["language"].is_string()) {
      throw UsageError("boost needs {\"language\": code, \"weight\": w}");
    }
    const std::string code = b["language"];
    if (!languages.Contains(code)) throw UsageError(fmt::format("unknown language '{}'", code));
    s = train::BoostLanguage(languages.size(), languages.Id(code), Weight(b.value("weight", json()), code));
  } else if (j.contains("weights")) {
    const auto& w = j["weights"];
    if (w.is_array()) {
      if (w.size() != n) {
        throw UsageError(fmt::format("expected {} weights, got {}", n, w.size()));
      }
      for (std::size_t i = 0; i < n; ++i) s.weights.push_back(Weight(w[i], languages.code(int(i))));
    } else if (w.is_object()) {
      s.weights.assign(n, 0.0);
      std::vector<bool> seen(n, false);
      for (const auto& [code, value] : w.items()) {
        if (!languages.Contains(code)) throw UsageError(fmt::format("unknown language '{}'", code));
        const auto id = static_cast<std::size_t>(languages.Id(code));
        s.weights[id] = Weight(value, code);
        seen[id] = true;
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i]) throw UsageError(fmt::format("missing weight for '{}'", languages.code(int(i))));
      }
    } else {
      throw UsageError("weights must be an array or an object keyed by language code");
    }
  } else {
    throw UsageError("body needs \"weights\" or \"boost\"");
  }
  s.Validate();
  return s;
}

struct ControlServer::Impl {
  httplib::Server server;
};

ControlServer::ControlServer(ControlSurface& surface, std::string static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;
  auto* s = &surface;

  svr.Get("/status", [s](const httplib::Request&, httplib::Response& res) {
    res.set_content(s->Status().ToJson(), kJson);
  });
  svr.Get("/metrics/history", [s](const httplib::Request& req, httplib::Response& res) {
    std::int64_t since = -1;
    if (req.has_param("since")) {
      try {
        since = std::stoll(req.get_param_value("since"));
      } catch (const std::exception&) {
        return Reject(res, 400, "since must be an integer step");
      }
    }
    std::string body;
    for (const auto& line : s->MetricsSince(since)) body += line + "\n";
    res.set_content(body, kJsonLines);
  });
  svr.Get("/audit", [s](const httplib::Request&, httplib::Response& res) {
    std::string body;
    for (const auto& a : s->Audit()) body += AuditLine(a) + "\n";
    res.set_content(body, kJsonLines);
  });
  svr.Post("/mixing", [s](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto languages = s->Languages();
      const auto ack = s->SubmitMixing(ParseMixingRequest(req.body, languages));
      ordered_json weights = ordered_json::object();
      for (int i = 0; i < languages.size(); ++i) weights[languages.code(i)] = ack.weights[i];
      Reply(res, 200, ordered_json{{"accepted", true},
                                   {"effective_step", ack.effective_step},
                                   {"weights", weights}});
    } catch (const UsageError& e) {
      Reject(res, 400, e.what());
    }
  });
  auto lifecycle = [s](const char* name, auto action) {
    return [s, name, action](const httplib::Request&, httplib::Response& res) {
      try {
        action(*s);
        Reply(res, 200, ordered_json{{"accepted", true}, {"action", name}});
      } catch (const UsageError& e) {
        Reject(res, 409, e.what());
      }
    };
  };
  svr.Post("/pause", lifecycle("pause", [](ControlSurface& c) { c.Pause(); }));
  svr.Post("/resume", lifecycle("resume", [](ControlSurface& c) { c.Resume(); }));
  svr.Post("/checkpoint", [s](const httplib::Request&, httplib::Response& res) {
    try {
      const auto done = s->CheckpointNow();
      Reply(res, 200, ordered_json{{"accepted", true}, {"path", done.path}, {"step", done.step}});
    } catch (const UsageError& e) {
      Reject(res, 409, e.what());
    } catch (const IoError& e) {
      Reject(res, 500, e.what());
    }
  });
  if (!static_dir.empty()) svr.set_mount_point("/", static_dir);
}

ControlServer::~ControlServer() { Stop(); }

int ControlServer::Start(const std::string& host, int port) {
  auto& svr = impl_->server;
  port_ = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  thread_ = std::thread([&svr] { svr.listen_after_bind(); });
  return port_;
}

void ControlServer::Stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

int ServePortFromEnv(int fallback) {
  const char* value = std::getenv("MLASR_SERVE_PORT");
  if (value == nullptr || *value == '\0') return fallback;
  try {
    const int port = std::stoi(value);
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    return port;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("MLASR_SERVE_PORT must be a port number, got '{}'", value));
  }
}

}  // namespace mlasr::harness
