#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace wcl::cli {

// Record of one command invocation: enough to re-run it and to check that
// the re-run reproduced every artifact.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  // The flag that names the output location, so a replay can redirect it.
  void set_output_flag(std::string flag, std::string value);
  void add_input(const std::string& role, const std::string& path);
  void add_output(const std::string& role, const std::string& path);
  // Written but not expected to be reproducible (wall-clock timings).
  void add_volatile(const std::string& role, const std::string& path);
  nlohmann::json& extra() { return extra_; }

  nlohmann::json to_json() const;
  void write(const std::string& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::string output_flag_, output_value_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json outputs_ = nlohmann::json::array();
  nlohmann::json volatile_ = nlohmann::json::array();
  nlohmann::json extra_ = nlohmann::json::object();
};

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace wcl::cli
