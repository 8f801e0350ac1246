#pragma once

// Run manifests: a versioned plain-text record of what a command did —
// resolved configuration, digests of every input and output file, seed, and
// wall-clock duration — sufficient to audit reproducibility.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wmt/util.hpp"

namespace wmt {

constexpr const char* kManifestHeader = "WMTMANIFEST 1";
constexpr const char* kCodeVersion = "0.1.0";

class RunManifest {
 public:
  explicit RunManifest(std::string command)
      : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void set_config(const std::string& key, const std::string& value) {
    config_.emplace_back(key, value);
  }
  void set_config(const std::string& key, int64_t value) {
    set_config(key, std::to_string(value));
  }
  void set_config(const std::string& key, uint64_t value) {
    set_config(key, std::to_string(value));
  }
  void set_config(const std::string& key, double value) { set_config(key, fmt_g(value, 17)); }

  void add_input(const std::filesystem::path& path) {
    inputs_.emplace_back(path.string(), hex64(fnv1a64_file(path)));
  }
  void add_output(const std::filesystem::path& path) {
    outputs_.emplace_back(path.string(), hex64(fnv1a64_file(path)));
  }

  std::string render() const {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    std::string out = std::string(kManifestHeader) + "\n";
    out += "command " + command_ + "\n";
    out += "code_version " + std::string(kCodeVersion) + "\n";
    for (const auto& [k, v] : config_) out += "config " + k + " " + v + "\n";
    for (const auto& [p, d] : inputs_) out += "input " + d + " " + p + "\n";
    for (const auto& [p, d] : outputs_) out += "output " + d + " " + p + "\n";
    out += "duration_ms " + std::to_string(elapsed) + "\n";
    return out;
  }

  void write(const std::filesystem::path& path) const { atomic_write_file(path, render()); }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<std::string, std::string>> config_;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

}  // namespace wmt
