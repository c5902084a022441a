#pragma once

// Per-invocation bookkeeping for the CLI: output tracking with cleanup on
// failure, and the run manifest written on success.

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace gdm::cli {

class RunContext {
 public:
  RunContext(std::string command, std::vector<std::string> argv)
      : command_(std::move(command)), argv_(std::move(argv)),
        start_(std::chrono::steady_clock::now()),
        started_at_(std::chrono::system_clock::now()) {}

  // Registers a path before it is written so a failure can remove it.
  const std::filesystem::path& output(const std::filesystem::path& p) {
    outputs_.push_back(p);
    return outputs_.back();
  }
  void input(const std::filesystem::path& p) { inputs_.push_back(p); }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  nlohmann::json& config() { return config_; }
  void mark_timing(const std::string& name) {
    timings_[name] = elapsed();
  }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void remove_outputs() noexcept {
    for (const auto& p : outputs_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

  nlohmann::json manifest(const std::string& version) const {
    nlohmann::json j;
    j["command"] = command_;
    j["argv"] = argv_;
    j["config"] = config_;
    j["seeds"] = seeds_;
    std::vector<std::string> in, out;
    for (const auto& p : inputs_) in.push_back(p.string());
    for (const auto& p : outputs_) out.push_back(p.string());
    j["inputs"] = in;
    j["outputs"] = out;
    j["toolkit_version"] = version;
    j["started_at_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(started_at_.time_since_epoch()).count();
    nlohmann::json t = timings_;
    t["total_seconds"] = elapsed();
    j["timings"] = t;
    return j;
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point start_;
  std::chrono::system_clock::time_point started_at_;
  std::vector<std::filesystem::path> outputs_;
  std::vector<std::filesystem::path> inputs_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json timings_ = nlohmann::json::object();
};

}  // namespace gdm::cli
