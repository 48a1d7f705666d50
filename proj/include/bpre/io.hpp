#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpre/bpre.hpp"
#include "bpre/environment.hpp"
#include "bpre/spine.hpp"
#include "bpre/walk.hpp"

namespace bpre {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// Environment spec config: {"family": ..., "parameters": {...}, "measure": ...}
json spec_to_json(const EnvironmentSpec& spec);
EnvironmentSpec spec_from_json(const json& j);
EnvironmentSpec load_spec_file(const std::filesystem::path& path);

json offspring_to_json(const OffspringLaw& law);
OffspringLaw offspring_from_json(const json& j);

// CSV with a header row; every row must match the header width.
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string csv_number(double v);

void write_renewal_csv(const std::filesystem::path& path,
                       const RenewalTable& table);
void write_samples_csv(const std::filesystem::path& path,
                       const WeightedSampleSet& set);
void write_trace_csv(const std::filesystem::path& path,
                     const GenerationTrace& trace);
void write_spine_csv(const std::filesystem::path& dir_stub,
                     const SpineTrace& trace);

// Run directory lifecycle: the directory is created with its manifest (and a
// `partial` marker) before any computation output; finish() removes the
// marker. Interrupted runs keep `partial` behind.
class RunDirectory {
 public:
  RunDirectory() = default;
  RunDirectory(std::filesystem::path dir, json manifest);
  void write_json(const std::string& name, const json& value);
  std::filesystem::path file(const std::string& name) const;
  void finish();
  const std::filesystem::path& path() const { return dir_; }
  bool active() const { return !dir_.empty(); }

 private:
  std::filesystem::path dir_;
};

std::string json_dump(const json& j);

}  // namespace bpre
