// Command-line front end. Talks to the engine exclusively through the
// public C API; every verb prints its JSON report to stdout and exits
// nonzero on any error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <selfmotr/selfmotr.h>

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string configPath;
  std::string outDir;
  std::vector<std::string> sets;  // dotted key=value overrides
};

void addCommonOpts(CLI::App* app, CommonOpts& o) {
  app->add_option("-c,--config", o.configPath,
                  "JSON run-config file (absent keys use defaults)")
      ->check(CLI::ExistingFile);
  app->add_option("-o,--out-dir", o.outDir, "output directory for artifacts");
  app->add_option("--set", o.sets,
                  "override a config value, e.g. --set model.d=32 or "
                  "--set train.recipe=self_proposal");
}

json parseOverrideValue(const std::string& raw) {
  json v;
  try {
    v = json::parse(raw);  // numbers, booleans, arrays, quoted strings
  } catch (const json::parse_error&) {
    v = raw;  // bare words become strings (e.g. recipe names)
  }
  return v;
}

// Builds the merged config document: file contents, then --set overrides,
// then --out-dir.
json buildConfigJson(const CommonOpts& o) {
  json doc = json::object();
  if (!o.configPath.empty()) {
    std::ifstream in(o.configPath);
    if (!in) throw CLI::RuntimeError("cannot read " + o.configPath, 1);
    doc = json::parse(in);
  }
  for (const std::string& kv : o.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw CLI::RuntimeError("--set expects key=value, got: " + kv, 1);
    std::string keyPath = kv.substr(0, eq);
    json* cursor = &doc;
    std::stringstream ss(keyPath);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty())
      throw CLI::RuntimeError("--set has an empty key: " + kv, 1);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i)
      cursor = &(*cursor)[parts[i]];
    (*cursor)[parts.back()] = parseOverrideValue(kv.substr(eq + 1));
  }
  if (!o.outDir.empty()) doc["out_dir"] = o.outDir;
  return doc;
}

struct ConfigGuard {
  smr_config* cfg = nullptr;
  ~ConfigGuard() { smr_config_destroy(cfg); }
};

struct StringGuard {
  char* s = nullptr;
  ~StringGuard() { smr_string_free(s); }
};

int fail(const std::string& context) {
  std::cerr << "error: " << context;
  const char* detail = smr_last_error();
  if (detail && *detail) std::cerr << ": " << detail;
  std::cerr << "\n";
  return 1;
}

int loadConfig(const CommonOpts& o, ConfigGuard& guard) {
  json doc;
  try {
    doc = buildConfigJson(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (smr_config_from_json(doc.dump().c_str(), &guard.cfg) != SMR_OK)
    return fail("invalid configuration");
  return 0;
}

int emit(const StringGuard& out) {
  std::cout << (out.s ? out.s : "{}") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SelfMOTR: self-proposal multi-object tracking on synthetic "
               "dot scenes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(smr_version()));

  CommonOpts trainOpts;
  bool dryRun = false;
  auto* train = app.add_subcommand(
      "train", "train a model and write checkpoint/log/metrics");
  addCommonOpts(train, trainOpts);
  train->add_flag("--dry-run", dryRun, "validate the config and exit");

  CommonOpts evalOpts;
  std::string evalCkpt;
  auto* eval =
      app.add_subcommand("eval", "evaluate a checkpoint on validation videos");
  addCommonOpts(eval, evalOpts);
  eval->add_option("--checkpoint", evalCkpt,
                   "checkpoint base path (without .json/.bin)")
      ->required();

  CommonOpts conflictOpts;
  std::string conflictCkpt;
  auto* conflict = app.add_subcommand(
      "conflict", "detection AP with vs. without track queries");
  addCommonOpts(conflict, conflictOpts);
  conflict->add_option("--checkpoint", conflictCkpt, "checkpoint base path")
      ->required();

  CommonOpts sweepOpts;
  std::string sweepParam;
  std::string sweepValues;
  auto* sweep = app.add_subcommand(
      "sweep", "train/evaluate across one parameter's values");
  addCommonOpts(sweep, sweepOpts);
  sweep->add_option("--param", sweepParam,
                    "c_prop | detect_decoder_depth | proposal_source")
      ->required();
  sweep->add_option("--values", sweepValues, "comma-separated values")
      ->required();

  CommonOpts profileOpts;
  std::string profileCkpt;
  auto* profile = app.add_subcommand(
      "profile", "check encoder/decoder invocation counts and throughput");
  addCommonOpts(profile, profileOpts);
  profile->add_option("--checkpoint", profileCkpt,
                      "optional checkpoint base path");

  CommonOpts genOpts;
  auto* gen =
      app.add_subcommand("gen-data", "write ground-truth CSVs for all seeds");
  addCommonOpts(gen, genOpts);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(trainOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_train(cfg.cfg, dryRun ? 1 : 0, &out.s) != SMR_OK)
      return fail("train failed");
    return emit(out);
  }
  if (eval->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(evalOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_eval(cfg.cfg, evalCkpt.c_str(), &out.s) != SMR_OK)
      return fail("eval failed");
    return emit(out);
  }
  if (conflict->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(conflictOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_conflict(cfg.cfg, conflictCkpt.c_str(), &out.s) != SMR_OK)
      return fail("conflict failed");
    return emit(out);
  }
  if (sweep->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(sweepOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_sweep(cfg.cfg, sweepParam.c_str(), sweepValues.c_str(),
                      &out.s) != SMR_OK)
      return fail("sweep failed");
    return emit(out);
  }
  if (profile->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(profileOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_profile(cfg.cfg, profileCkpt.c_str(), &out.s) != SMR_OK)
      return fail("profile failed");
    return emit(out);
  }
  if (gen->parsed()) {
    ConfigGuard cfg;
    if (int rc = loadConfig(genOpts, cfg)) return rc;
    StringGuard out;
    if (smr_cmd_gen_data(cfg.cfg, &out.s) != SMR_OK)
      return fail("gen-data failed");
    return emit(out);
  }
  return 1;
}
