#pragma once

#include <memory>
#include <string>
#include <thread>

#include "mlasr/harness/session.h"

namespace mlasr::harness {

// Plain-HTTP control surface (no authentication; desk use only):
//   GET  /status                   StatusSnapshot as JSON
//   GET  /metrics/history?since=s  metrics lines with step > s (JSON lines)
//   GET  /audit                    mixing audit log (JSON lines)
//   POST /mixing                   {"weights": {code: w, ...}} or [w, ...],
//                                  or {"boost": {"language": code, "weight": w}}
//   POST /pause, /resume, /checkpoint
// Anything under static_dir is served for other GET paths.
class ControlServer {
 public:
  explicit ControlServer(ControlSurface& surface, std::string static_dir = "");
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  // Returns the bound port. Throws IoError when binding fails.
  int Start(const std::string& host, int port);
  void Stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

// Port from MLASR_SERVE_PORT, else `fallback`.
int ServePortFromEnv(int fallback);

// Parses a /mixing body against a language table into a schedule. Throws
// UsageError with the reason on malformed or unknown input.
train::MixingSchedule ParseMixingRequest(std::string_view body,
                                         const train::LanguageTable& languages);

}  // namespace mlasr::harness
