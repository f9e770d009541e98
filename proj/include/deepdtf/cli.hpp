#pragma once

// Command-line front end: prepare, split, train, eval, explain and
// parse-smiles, configured by a flat key=value file plus flag overrides.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "deepdtf/interpret.hpp"
#include "deepdtf/model.hpp"
#include "deepdtf/omics.hpp"
#include "deepdtf/train.hpp"

namespace deepdtf::cli {

inline constexpr const char* kVersion = "0.1.0";

struct KeySpec {
  std::string name;
  std::string default_value;
  std::string help;
};
// Every recognised configuration key, in the order they are written out.
const std::vector<KeySpec>& config_keys();

// Resolved run description. Starts from the defaults; later merges win.
class RunConfig {
 public:
  RunConfig();

  // Lines are key=value; '#' starts a comment. Unknown keys and malformed
  // lines raise ConfigError with the line number.
  void merge_text(std::string_view text, const std::string& source);
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;  // comma-separated, empty entries dropped

  // Every key, defaults materialised, in table order.
  std::string text() const;

  omics::PrepareOptions prepare() const;
  model::ModelConfig model() const;
  train::TrainConfig training() const;
  interpret::ExplainConfig explain() const;

 private:
  std::map<std::string, std::string> values_;
};

// Runs one command. Returns the process exit code: 0 ok, 2 usage or
// configuration, 3 data, 4 numeric, 5 IO.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace deepdtf::cli
