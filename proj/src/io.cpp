#include "bpre/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bpre {

json offspring_to_json(const OffspringLaw& law) {
  json j;
  switch (law.kind()) {
    case OffspringKind::geometric:
      j["kind"] = "geometric";
      j["s"] = law.geometric_s();
      break;
    case OffspringKind::poisson:
      j["kind"] = "poisson";
      j["lambda"] = law.poisson_lambda();
      break;
    case OffspringKind::point_mass:
      j["kind"] = "point_mass";
      j["k"] = law.point_value();
      break;
    case OffspringKind::finite_table:
      j["kind"] = "finite_table";
      j["weights"] = law.table();
      break;
  }
  if (law.size_biased()) j["size_biased"] = true;
  return j;
}

OffspringLaw offspring_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  OffspringLaw law = [&] {
    if (kind == "geometric") {
      return OffspringLaw::geometric(j.at("s").get<double>());
    }
    if (kind == "poisson") {
      return OffspringLaw::poisson(j.at("lambda").get<double>());
    }
    if (kind == "point_mass") {
      return OffspringLaw::point_mass(j.at("k").get<std::int64_t>());
    }
    if (kind == "finite_table") {
      return OffspringLaw::finite_table(
          j.at("weights").get<std::vector<double>>());
    }
    throw std::invalid_argument("offspring config: unknown kind '" + kind + "'");
  }();
  if (j.value("size_biased", false)) law = law.size_bias();
  return law;
}

json spec_to_json(const EnvironmentSpec& spec) {
  json j;
  if (spec.is_lognormal()) {
    j["family"] = "lognormal_geometric";
    j["parameters"] = {{"sigma_sq", spec.sigma_sq()}, {"mu", spec.mu()}};
  } else {
    j["family"] = "discrete_mixture";
    json atoms = json::array();
    for (const auto& [law, p] : spec.atoms()) {
      atoms.push_back({{"law", offspring_to_json(law)}, {"probability", p}});
    }
    j["parameters"] = {{"atoms", atoms}};
  }
  j["measure"] = "tilted";
  return j;
}

EnvironmentSpec spec_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  const json& params = j.at("parameters");
  if (family == "lognormal_geometric") {
    const double sigma_sq = params.at("sigma_sq").get<double>();
    const double mu = params.contains("mu") ? params.at("mu").get<double>()
                                            : -sigma_sq;
    return EnvironmentSpec::lognormal_geometric(sigma_sq, mu);
  }
  if (family == "discrete_mixture") {
    std::vector<std::pair<OffspringLaw, double>> atoms;
    for (const auto& a : params.at("atoms")) {
      atoms.emplace_back(offspring_from_json(a.at("law")),
                         a.at("probability").get<double>());
    }
    return EnvironmentSpec::discrete_mixture(std::move(atoms));
  }
  throw std::invalid_argument("spec config: unknown family '" + family + "'");
}

EnvironmentSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open spec file: " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("spec file " + path.string() +
                             ": parse error: " + e.what());
  }
  return spec_from_json(j);
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) {
      throw std::logic_error("write_csv: row width mismatch");
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
}

void write_renewal_csv(const std::filesystem::path& path,
                       const RenewalTable& table) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < table.grid.size(); ++i) {
    rows.push_back({csv_number(table.grid[i]), csv_number(table.values[i]),
                    csv_number(table.stderrs[i]), std::string(1, table.side)});
  }
  if (table.side == 'v') {
    rows.push_back({"0", csv_number(table.v_at_zero),
                    csv_number(table.v_at_zero_se), "v0"});
  }
  write_csv(path, {"x", "value", "stderr", "side"}, rows);
}

void write_samples_csv(const std::filesystem::path& path,
                       const WeightedSampleSet& set) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(set.samples.size());
  for (const auto& s : set.samples) {
    rows.push_back({csv_number(s.weight), std::to_string(s.z_tau_r),
                    std::to_string(s.z_r), csv_number(s.stat_norm),
                    std::to_string(s.tau_r), csv_number(s.s_r),
                    csv_number(s.s_tau_r), csv_number(s.env_mean_at_tau),
                    csv_number(s.env_mean_after_tau),
                    csv_number(s.env_functional)});
  }
  write_csv(path,
            {"weight", "z_tau_r", "z_r", "stat_norm", "tau_r", "s_r", "s_tau_r",
             "env_mean_at_tau", "env_mean_after_tau", "env_functional"},
            rows);
}

void write_trace_csv(const std::filesystem::path& path,
                     const GenerationTrace& trace) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < trace.sizes.size(); ++k) {
    rows.push_back({std::to_string(k), std::to_string(trace.sizes[k]),
                    csv_number(trace.walk.sums.empty() ? 0.0
                                                       : trace.walk.sums[k])});
  }
  write_csv(path, {"k", "z_k", "s_k"}, rows);
}

void write_spine_csv(const std::filesystem::path& dir_stub,
                     const SpineTrace& trace) {
  std::vector<std::vector<std::string>> totals;
  for (std::int64_t k = 0; k <= trace.horizon(); ++k) {
    totals.push_back({std::to_string(k), std::to_string(trace.z_tilde(k)),
                      csv_number(trace.walk.sums[static_cast<std::size_t>(k)])});
  }
  write_csv(dir_stub.string() + "_totals.csv", {"k", "z_tilde_k", "s_k"},
            totals);
  std::vector<std::vector<std::string>> sparse;
  for (std::int64_t i = 0; i < trace.horizon(); ++i) {
    for (std::int64_t k = i + 1; k <= trace.horizon(); ++k) {
      const std::int64_t z = trace.side_at(i, k);
      if (z > 0) {
        sparse.push_back(
            {std::to_string(k), std::to_string(i), std::to_string(z)});
      }
    }
  }
  write_csv(dir_stub.string() + "_side.csv", {"k", "i", "z_tilde_k_i"}, sparse);
}

RunDirectory::RunDirectory(std::filesystem::path dir, json manifest)
    : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  manifest["schema_version"] = kSchemaVersion;
  {
    std::ofstream marker(dir_ / "partial");
    marker << "run in progress\n";
  }
  std::ofstream out(dir_ / "manifest.json");
  if (!out) {
    throw std::runtime_error("cannot write manifest in " + dir_.string());
  }
  out << json_dump(manifest) << "\n";
}

void RunDirectory::write_json(const std::string& name, const json& value) {
  std::ofstream out(file(name));
  if (!out) {
    throw std::runtime_error("cannot write " + file(name).string());
  }
  out << json_dump(value) << "\n";
}

std::filesystem::path RunDirectory::file(const std::string& name) const {
  return dir_ / name;
}

void RunDirectory::finish() {
  if (!dir_.empty()) std::filesystem::remove(dir_ / "partial");
}

std::string json_dump(const json& j) { return j.dump(2); }

}  // namespace bpre
