#include <charconv>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "irfkit/errors.hpp"
#include "irfkit/harness/commands.hpp"

namespace irfkit::harness {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + p.string());
}

const char* status_name(int code) {
  switch (code) {
    case kExitOk: return "ok";
    case kExitNumeric: return "numeric_failure";
    case kExitPartial: return "partial";
    default: return "error";
  }
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> header, const std::string& digest, std::uint64_t seed)
    : columns_(header.size()) {
  text_ = "# config_digest=" + digest + " seed=" + std::to_string(seed) + "\n";
  add(header);
}

void CsvTable::add(const std::vector<std::string>& row) {
  if (row.size() != columns_) throw Error("csv: row width differs from the header");
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) text_ += ',';
    const bool quote = row[i].find_first_of(",\"\n") != std::string::npos;
    if (!quote) {
      text_ += row[i];
      continue;
    }
    text_ += '"';
    for (char c : row[i]) {
      if (c == '"') text_ += '"';
      text_ += c;
    }
    text_ += '"';
  }
  text_ += '\n';
}

int run_command(const std::string& subcommand, const RunOptions& opt, std::ostream& log) {
  try {
    if (opt.format != "csv") throw ConfigError("--format: only csv is supported");
    if (subcommand == "report") {
      if (!opt.out) throw ConfigError("--out: report needs the run directory");
      return run_report(*opt.out, log);
    }
    if (opt.config_path.empty()) throw ConfigError("--config: required for " + subcommand);
    const std::string started = utc_now();
    const Config config = load_config(opt.config_path);
    const Node root(config.root, "config");
    const std::uint64_t seed = opt.seed ? *opt.seed : root.count("seed", 0);
    std::string dir = "irfkit_out";
    if (root.has("output")) dir = root.child("output").text("dir", dir);
    if (opt.out) dir = *opt.out;

    RunOutput out;
    if (subcommand == "simulate") {
      out = run_simulate(config, seed, opt.threads);
    } else if (subcommand == "diagnose") {
      out = run_diagnose(config, seed, opt.threads);
    } else if (subcommand == "verify") {
      out = run_verify(config, seed, opt.threads);
    } else {
      throw ConfigError("subcommand: unknown \"" + subcommand + "\"");
    }

    fs::create_directories(dir);
    out.files["config.json"] = config.text;
    Json files = Json::array();
    for (const auto& [name, bytes] : out.files) {
      write_file(fs::path(dir) / name, bytes);
      files.push_back({{"name", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }
    Json manifest = {{"schema_version", kSchemaVersion},
                     {"tool_version", kToolVersion},
                     {"subcommand", subcommand},
                     {"config_digest", config.digest},
                     {"seed", seed},
                     {"status", status_name(out.exit_code)},
                     {"messages", out.messages},
                     {"files", files},
                     {"started_at", started},
                     {"finished_at", utc_now()}};
    write_file(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& m : out.messages) log << m << "\n";
    return out.exit_code;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    log << "numerical failure in " << e.component() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    log << e.kind() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

int run_report(const std::string& out_dir, std::ostream& log) {
  const fs::path dir(out_dir);
  Json manifest;
  try {
    manifest = Json::parse(read_file(dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw ConfigError("manifest.json: " + std::string(e.what()));
  }
  std::ostringstream rep;
  bool ok = true;
  const std::string config_text = read_file(dir / "config.json");
  const bool digest_ok = sha256_hex(config_text) == manifest.value("config_digest", "");
  ok = ok && digest_ok;
  rep << "subcommand: " << manifest.value("subcommand", "?") << "\n";
  rep << "tool_version: " << manifest.value("tool_version", "?") << "\n";
  rep << "seed: " << manifest.value("seed", 0ULL) << "\n";
  rep << "status: " << manifest.value("status", "?") << "\n";
  rep << "config_digest: " << manifest.value("config_digest", "") << (digest_ok ? " (ok)" : " (MISMATCH)") << "\n";
  for (const auto& f : manifest.value("files", Json::array())) {
    const std::string name = f.value("name", "");
    std::string state = "ok";
    if (!fs::exists(dir / name)) {
      state = "MISSING";
    } else if (sha256_hex(read_file(dir / name)) != f.value("sha256", "")) {
      state = "MODIFIED";
    }
    ok = ok && state == "ok";
    rep << "file " << name << ": " << state << "\n";
  }
  if (fs::exists(dir / "certificate.json")) {
    const Json cert = Json::parse(read_file(dir / "certificate.json"));
    for (const auto& c : cert.value("conditions", Json::array())) {
      rep << "condition " << c.value("id", "") << " ";
      if (c.contains("error")) {
        rep << "error " << c["error"].value("type", "") << ": " << c["error"].value("message", "") << "\n";
      } else {
        rep << c.value("condition", "") << " " << c.value("verdict", "") << " margin=";
        rep << (c["margin"].is_number() ? format_double(c["margin"].get<double>()) : "null") << "\n";
      }
    }
  }
  write_file(dir / "report.txt", rep.str());
  log << rep.str();
  return ok ? kExitOk : kExitConfig;
}

}  // namespace irfkit::harness
