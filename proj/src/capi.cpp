#include "selfmotr/selfmotr.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>

#include "harness.hpp"
#include "mot_types.hpp"

using nlohmann::json;

struct smr_config {
  smr::RunConfig cfg;
};

namespace {

thread_local std::string g_lastError;

char* dupString(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
smr_status guarded(Fn&& fn) {
  g_lastError.clear();
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    g_lastError = e.what();
    return SMR_ERR_INVALID_ARGUMENT;
  } catch (const std::ios_base::failure& e) {
    g_lastError = e.what();
    return SMR_ERR_IO;
  } catch (const std::exception& e) {
    g_lastError = e.what();
    const std::string what = e.what();
    if (what.find("open") != std::string::npos ||
        what.find("file") != std::string::npos)
      return SMR_ERR_IO;
    return SMR_ERR_RUNTIME;
  }
}

smr_status requireArg(const void* p, const char* name) {
  if (p) return SMR_OK;
  g_lastError = std::string(name) + " must not be null";
  return SMR_ERR_INVALID_ARGUMENT;
}

std::vector<std::string> splitCsvList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    // trim surrounding whitespace
    const auto a = tok.find_first_not_of(" \t");
    const auto b = tok.find_last_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(tok.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

extern "C" {

const char* smr_version(void) { return "1.0.0"; }

const char* smr_last_error(void) { return g_lastError.c_str(); }

void smr_string_free(char* s) { delete[] s; }

smr_status smr_config_create(smr_config** out) {
  if (smr_status st = requireArg(out, "out"); st != SMR_OK) return st;
  return guarded([&] {
    *out = new smr_config{};
    return SMR_OK;
  });
}

smr_status smr_config_from_json(const char* jsonText, smr_config** out) {
  if (smr_status st = requireArg(jsonText, "json"); st != SMR_OK) return st;
  if (smr_status st = requireArg(out, "out"); st != SMR_OK) return st;
  return guarded([&] {
    json j;
    try {
      j = json::parse(jsonText);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(e.what());
    }
    *out = new smr_config{smr::runConfigFromJson(j)};
    return SMR_OK;
  });
}

smr_status smr_config_to_json(const smr_config* cfg, char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    *out_json = dupString(smr::toJson(cfg->cfg).dump(2));
    return SMR_OK;
  });
}

void smr_config_destroy(smr_config* cfg) { delete cfg; }

smr_status smr_cmd_train(const smr_config* cfg, int dry_run, char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::TrainArtifacts art = smr::cmdTrain(cfg->cfg, dry_run != 0);
    json j;
    j["dry_run"] = dry_run != 0;
    if (dry_run) {
      j["valid"] = true;
    } else {
      j["checkpoint_base"] = art.checkpointBase;
      j["epochs"] = art.log.size();
      j["metrics"] = json::parse(art.valMetrics.toJson());
    }
    *out_json = dupString(j.dump(2));
    return SMR_OK;
  });
}

smr_status smr_cmd_eval(const smr_config* cfg, const char* checkpoint_base,
                        char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(checkpoint_base, "checkpoint_base");
      st != SMR_OK)
    return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::MetricsReport m = smr::cmdEval(cfg->cfg, checkpoint_base);
    *out_json = dupString(m.toJson());
    return SMR_OK;
  });
}

smr_status smr_cmd_conflict(const smr_config* cfg, const char* checkpoint_base,
                            char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(checkpoint_base, "checkpoint_base");
      st != SMR_OK)
    return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::ConflictReport r = smr::cmdConflict(cfg->cfg, checkpoint_base);
    json j;
    j["ap_with_track_queries"] = r.apWith;
    j["ap_without_track_queries"] = r.apWithout;
    j["gap"] = r.gap();
    *out_json = dupString(j.dump(2));
    return SMR_OK;
  });
}

smr_status smr_cmd_sweep(const smr_config* cfg, const char* param,
                         const char* comma_separated_values, char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(param, "param"); st != SMR_OK) return st;
  if (smr_status st = requireArg(comma_separated_values, "values");
      st != SMR_OK)
    return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    std::vector<std::string> values = splitCsvList(comma_separated_values);
    if (values.empty())
      throw std::invalid_argument("sweep requires at least one value");
    std::vector<smr::SweepRow> rows = smr::cmdSweep(cfg->cfg, param, values);
    json j = json::array();
    for (const auto& row : rows) {
      json r;
      r["value"] = row.value;
      r["metrics"] = json::parse(row.metrics.toJson());
      j.push_back(r);
    }
    *out_json = dupString(j.dump(2));
    return SMR_OK;
  });
}

smr_status smr_cmd_profile(const smr_config* cfg, const char* checkpoint_base,
                           char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::ProfileReport r =
        smr::cmdProfile(cfg->cfg, checkpoint_base ? checkpoint_base : "");
    json j;
    j["frames"] = r.frames;
    j["encoder_invocations"] = r.encoderInvocations;
    j["decoder_invocations"] = r.decoderInvocations;
    j["fps_self_proposal"] = r.fpsSelfProposal;
    j["fps_baseline"] = r.fpsBaseline;
    j["overhead"] = r.overhead;
    *out_json = dupString(j.dump(2));
    return SMR_OK;
  });
}

smr_status smr_cmd_gen_data(const smr_config* cfg, char** out_json) {
  if (smr_status st = requireArg(cfg, "cfg"); st != SMR_OK) return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::cmdGenData(cfg->cfg);
    std::ifstream in(std::filesystem::path(cfg->cfg.outDir) / "dataset.json");
    if (!in) throw std::ios_base::failure("cannot read dataset.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    *out_json = dupString(text);
    return SMR_OK;
  });
}

smr_status smr_evaluate_csv(const char* tracking_csv_path,
                            const char* gt_csv_path, char** out_json) {
  if (smr_status st = requireArg(tracking_csv_path, "tracking_csv_path");
      st != SMR_OK)
    return st;
  if (smr_status st = requireArg(gt_csv_path, "gt_csv_path"); st != SMR_OK)
    return st;
  if (smr_status st = requireArg(out_json, "out_json"); st != SMR_OK) return st;
  return guarded([&] {
    smr::TrackingResult tr = smr::readTrackingCsv(tracking_csv_path);
    smr::GtVideo gt = smr::readGtCsv(gt_csv_path);
    smr::MetricsReport m = smr::evaluateTracking(tr, gt);
    *out_json = dupString(m.toJson());
    return SMR_OK;
  });
}

}  // extern "C"
