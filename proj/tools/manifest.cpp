#include "manifest.hpp"

#include <filesystem>
#include <fstream>

#include "wcl/digest.hpp"
#include "wcl/error.hpp"

#ifndef WCL_VERSION
#define WCL_VERSION "unknown"
#endif

namespace wcl::cli {

Manifest::Manifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)) {}

void Manifest::set_output_flag(std::string flag, std::string value) {
  output_flag_ = std::move(flag);
  output_value_ = std::move(value);
}

void Manifest::add_input(const std::string& role, const std::string& path) {
  inputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
}

void Manifest::add_output(const std::string& role, const std::string& path) {
  outputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
}

void Manifest::add_volatile(const std::string& role, const std::string& path) {
  volatile_.push_back({{"role", role}, {"path", path}});
}

nlohmann::json Manifest::to_json() const {
  return {{"format", "wcl-manifest"},
          {"version", 1},
          {"command", command_},
          {"argv", argv_},
          {"cwd", std::filesystem::current_path().string()},
          {"seed", seed_},
          {"config", config_},
          {"output_flag", output_flag_},
          {"output_value", output_value_},
          {"inputs", inputs_},
          {"outputs", outputs_},
          {"volatile_outputs", volatile_},
          {"versions", {{"wcl", WCL_VERSION}, {"checkpoint_format", 1}, {"compiler", __VERSION__}}},
          {"extra", extra_}};
}

void Manifest::write(const std::string& path) const { write_json_file(path, to_json()); }

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

}  // namespace wcl::cli
