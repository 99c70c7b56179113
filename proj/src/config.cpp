#include "fedsketch/config.hpp"

#include <set>
#include <sstream>
#include <string>

#include "fedsketch/errors.hpp"
#include "fedsketch/io.hpp"

namespace fedsketch::config {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value,
                      const std::string& why) {
  throw config_error("config key '" + key + "': " + why + " (got '" + value +
                     "')");
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    return io::parse_uint(value, key);
  } catch (const data_error& e) {
    throw config_error(e.what());
  }
}

std::uint32_t to_u32(const std::string& key, const std::string& value) {
  const std::uint64_t v = to_u64(key, value);
  if (v > 0xffffffffULL) bad(key, value, "value out of 32-bit range");
  return static_cast<std::uint32_t>(v);
}

std::uint32_t to_u32_pos(const std::string& key, const std::string& value) {
  const std::uint32_t v = to_u32(key, value);
  if (v == 0) bad(key, value, "must be positive");
  return v;
}

double to_f64(const std::string& key, const std::string& value) {
  try {
    return io::parse_double(value, key);
  } catch (const data_error& e) {
    throw config_error(e.what());
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad(key, value, "expected true or false");
}

}  // namespace

const char* algorithm_name(fed::Algorithm a) {
  return a == fed::Algorithm::fedavg ? "fedavg" : "fedmlh";
}
const char* weighting_name(fed::Weighting w) {
  return w == fed::Weighting::uniform ? "uniform" : "sample_proportional";
}
const char* download_scope_name(fed::DownloadScope d) {
  return d == fed::DownloadScope::selected ? "selected" : "all";
}
const char* precision_name(model::Precision p) {
  return p == model::Precision::f32 ? "f32" : "f64";
}
const char* merge_mode_name(hashing::MergeMode m) {
  return m == hashing::MergeMode::mean ? "mean" : "median";
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  io::LineReader reader(text);
  std::string line;
  while (reader.next(line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(reader.line_number()) +
                         ": expected key=value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw config_error("config line " + std::to_string(reader.line_number()) +
                         ": empty key");
    }
    if (!seen.insert(key).second) {
      throw config_error("config key '" + key + "' appears more than once");
    }

    if (key == "seed") {
      cfg.seed = to_u64(key, value);
    } else if (key == "out.dir") {
      cfg.out_dir = value;
    } else if (key == "out.timing") {
      cfg.out_timing = to_bool(key, value);
    } else if (key == "data.path") {
      cfg.data_path = value;
    } else if (key == "data.test_path") {
      cfg.test_path = value;
    } else if (key == "data.holdout") {
      const double v = to_f64(key, value);
      if (v < 0.0 || v >= 1.0) bad(key, value, "must lie in [0, 1)");
      cfg.holdout = v;
    } else if (key == "data.feature_hash_dim") {
      cfg.feature_hash_dim = to_u32(key, value);
    } else if (key == "data.feature_hash_seed") {
      cfg.feature_hash_seed = to_u64(key, value);
    } else if (key == "synth.N") {
      cfg.synthetic = true;
      cfg.synth.N = to_u32_pos(key, value);
    } else if (key == "synth.d") {
      cfg.synthetic = true;
      cfg.synth.d = to_u32_pos(key, value);
    } else if (key == "synth.p") {
      cfg.synthetic = true;
      cfg.synth.p = to_u32_pos(key, value);
    } else if (key == "synth.zipf") {
      cfg.synthetic = true;
      const double v = to_f64(key, value);
      if (v < 0.0) bad(key, value, "must be >= 0");
      cfg.synth.zipf_exponent = v;
    } else if (key == "synth.features_per_class") {
      cfg.synthetic = true;
      cfg.synth.features_per_class = to_u32_pos(key, value);
    } else if (key == "synth.noise_rate") {
      cfg.synthetic = true;
      const double v = to_f64(key, value);
      if (v < 0.0) bad(key, value, "must be >= 0");
      cfg.synth.noise_rate = v;
    } else if (key == "synth.labels_per_sample") {
      cfg.synthetic = true;
      cfg.synth.labels_per_sample = to_u32_pos(key, value);
    } else if (key == "synth.seed") {
      cfg.synthetic = true;
      cfg.synth_seed = to_u64(key, value);
    } else if (key == "partition.path") {
      cfg.partition_path = value;
    } else if (key == "partition.F") {
      cfg.partition_F = to_u32(key, value);
    } else if (key == "partition.seed") {
      cfg.partition_seed = to_u64(key, value);
    } else if (key == "fed.algorithm") {
      if (value == "fedavg") {
        cfg.algorithm = fed::Algorithm::fedavg;
      } else if (value == "fedmlh") {
        cfg.algorithm = fed::Algorithm::fedmlh;
      } else {
        bad(key, value, "expected fedavg or fedmlh");
      }
    } else if (key == "fed.K") {
      cfg.K = to_u32_pos(key, value);
    } else if (key == "fed.S") {
      cfg.S = to_u32_pos(key, value);
    } else if (key == "fed.T") {
      cfg.T = to_u32_pos(key, value);
    } else if (key == "fed.E") {
      cfg.E = to_u32_pos(key, value);
    } else if (key == "fed.lr") {
      const double v = to_f64(key, value);
      if (!(v > 0.0)) bad(key, value, "must be positive");
      cfg.lr = v;
    } else if (key == "fed.batch") {
      cfg.batch = to_u32_pos(key, value);
    } else if (key == "fed.weighting") {
      if (value == "uniform") {
        cfg.weighting = fed::Weighting::uniform;
      } else if (value == "sample_proportional") {
        cfg.weighting = fed::Weighting::sample_proportional;
      } else {
        bad(key, value, "expected uniform or sample_proportional");
      }
    } else if (key == "fed.download_scope") {
      if (value == "selected") {
        cfg.download_scope = fed::DownloadScope::selected;
      } else if (value == "all") {
        cfg.download_scope = fed::DownloadScope::all;
      } else {
        bad(key, value, "expected selected or all");
      }
    } else if (key == "fed.patience") {
      cfg.patience = to_u32(key, value);
    } else if (key == "fed.eval_each_round") {
      cfg.eval_each_round = to_bool(key, value);
    } else if (key == "fed.precision") {
      if (value == "f32") {
        cfg.precision = model::Precision::f32;
      } else if (value == "f64") {
        cfg.precision = model::Precision::f64;
      } else {
        bad(key, value, "expected f32 or f64");
      }
    } else if (key == "fed.threads") {
      cfg.threads = to_u32_pos(key, value);
    } else if (key == "model.h1") {
      cfg.h1 = to_u32_pos(key, value);
    } else if (key == "model.h2") {
      cfg.h2 = to_u32_pos(key, value);
    } else if (key == "scheme.path") {
      cfg.scheme_path = value;
    } else if (key == "scheme.B") {
      cfg.scheme_B = to_u32_pos(key, value);
    } else if (key == "scheme.R") {
      cfg.scheme_R = to_u32_pos(key, value);
    } else if (key == "scheme.seed") {
      cfg.scheme_seed = to_u64(key, value);
    } else if (key == "merge.mode") {
      if (value == "mean") {
        cfg.merge_mode = hashing::MergeMode::mean;
      } else if (value == "median") {
        cfg.merge_mode = hashing::MergeMode::median;
      } else {
        bad(key, value, "expected mean or median");
      }
    } else if (key == "merge.quantity") {
      if (value == "loglik") {
        cfg.merge_logits = false;
      } else if (value == "logits") {
        cfg.merge_logits = true;
      } else {
        bad(key, value, "expected loglik or logits");
      }
    } else if (key == "metrics.ks") {
      std::string squeezed;
      for (char c : value) {
        if (c != ' ') squeezed += c;
      }
      if (squeezed != "1,3,5") {
        bad(key, value, "the engine evaluates exactly top-1,3,5");
      }
      cfg.metrics_ks = "1,3,5";
    } else {
      throw config_error("unknown config key '" + key + "' on line " +
                         std::to_string(reader.line_number()));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const data_error& e) {
    throw config_error(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

void validate_run_config(const ExperimentConfig& cfg) {
  const bool has_file = !cfg.data_path.empty();
  if (has_file && cfg.synthetic) {
    throw config_error("config sets both data.path and synth.*; pick one data source");
  }
  if (!has_file && !cfg.synthetic) {
    throw config_error("config needs a data source: data.path or synth.*");
  }
  if (cfg.synthetic) {
    if (cfg.synth.N == 0 || cfg.synth.d == 0 || cfg.synth.p == 0) {
      throw config_error("synthetic data needs synth.N, synth.d and synth.p");
    }
    if (!cfg.test_path.empty()) {
      throw config_error("data.test_path does not apply to synthetic data; use data.holdout");
    }
    if (cfg.synth.labels_per_sample > cfg.synth.p) {
      throw config_error("synth.labels_per_sample exceeds synth.p");
    }
  }
  if (!cfg.test_path.empty() && cfg.holdout.has_value() && *cfg.holdout > 0.0) {
    throw config_error("data.test_path and a positive data.holdout are mutually exclusive");
  }
  if (!cfg.partition_path.empty() && cfg.holdout.has_value() &&
      *cfg.holdout > 0.0) {
    throw config_error(
        "partition.path indexes the unsplit dataset; a positive data.holdout "
        "would renumber its samples");
  }
  if (cfg.S > cfg.K) {
    throw config_error("fed.S (" + std::to_string(cfg.S) +
                       ") exceeds fed.K (" + std::to_string(cfg.K) + ")");
  }
  const bool has_scheme =
      !cfg.scheme_path.empty() || cfg.scheme_B != 0 || cfg.scheme_R != 0 ||
      cfg.scheme_seed.has_value();
  if (cfg.algorithm == fed::Algorithm::fedmlh) {
    if (cfg.scheme_path.empty() && (cfg.scheme_B == 0 || cfg.scheme_R == 0)) {
      throw config_error("fedmlh needs scheme.B and scheme.R (or scheme.path)");
    }
    if (!cfg.scheme_path.empty() && (cfg.scheme_B != 0 || cfg.scheme_R != 0)) {
      throw config_error("scheme.path conflicts with scheme.B/scheme.R");
    }
  } else if (has_scheme) {
    throw config_error("scheme.* keys require fed.algorithm=fedmlh");
  }
}

void resolve_defaults(ExperimentConfig& cfg) {
  if (!cfg.weighting.has_value()) {
    cfg.weighting = cfg.algorithm == fed::Algorithm::fedavg
                        ? fed::Weighting::sample_proportional
                        : fed::Weighting::uniform;
  }
  if (!cfg.download_scope.has_value()) {
    cfg.download_scope = cfg.algorithm == fed::Algorithm::fedavg
                             ? fed::DownloadScope::selected
                             : fed::DownloadScope::all;
  }
  if (!cfg.holdout.has_value()) {
    cfg.holdout =
        cfg.test_path.empty() && cfg.partition_path.empty() ? 0.2 : 0.0;
  }
  if (!cfg.feature_hash_seed.has_value()) cfg.feature_hash_seed = cfg.seed;
  if (!cfg.partition_seed.has_value()) cfg.partition_seed = cfg.seed;
  if (!cfg.scheme_seed.has_value()) cfg.scheme_seed = cfg.seed;
  if (cfg.synthetic) {
    if (!cfg.synth_seed.has_value()) cfg.synth_seed = cfg.seed;
    cfg.synth.seed = *cfg.synth_seed;
  }
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "seed=" << cfg.seed << "\n";
  if (!cfg.out_dir.empty()) out << "out.dir=" << cfg.out_dir << "\n";
  out << "out.timing=" << (cfg.out_timing ? "true" : "false") << "\n";
  if (!cfg.data_path.empty()) {
    out << "data.path=" << cfg.data_path << "\n";
    if (!cfg.test_path.empty()) out << "data.test_path=" << cfg.test_path << "\n";
  }
  if (cfg.holdout.has_value()) {
    out << "data.holdout=" << io::format_double(*cfg.holdout) << "\n";
  }
  if (cfg.feature_hash_dim != 0) {
    out << "data.feature_hash_dim=" << cfg.feature_hash_dim << "\n";
    if (cfg.feature_hash_seed.has_value()) {
      out << "data.feature_hash_seed=" << *cfg.feature_hash_seed << "\n";
    }
  }
  if (cfg.synthetic) {
    out << "synth.N=" << cfg.synth.N << "\n";
    out << "synth.d=" << cfg.synth.d << "\n";
    out << "synth.p=" << cfg.synth.p << "\n";
    out << "synth.zipf=" << io::format_double(cfg.synth.zipf_exponent) << "\n";
    out << "synth.features_per_class=" << cfg.synth.features_per_class << "\n";
    out << "synth.noise_rate=" << io::format_double(cfg.synth.noise_rate) << "\n";
    out << "synth.labels_per_sample=" << cfg.synth.labels_per_sample << "\n";
    if (cfg.synth_seed.has_value()) out << "synth.seed=" << *cfg.synth_seed << "\n";
  }
  if (!cfg.partition_path.empty()) {
    out << "partition.path=" << cfg.partition_path << "\n";
  } else {
    if (cfg.partition_F.has_value()) out << "partition.F=" << *cfg.partition_F << "\n";
    if (cfg.partition_seed.has_value()) {
      out << "partition.seed=" << *cfg.partition_seed << "\n";
    }
  }
  out << "fed.algorithm=" << algorithm_name(cfg.algorithm) << "\n";
  out << "fed.K=" << cfg.K << "\n";
  out << "fed.S=" << cfg.S << "\n";
  out << "fed.T=" << cfg.T << "\n";
  out << "fed.E=" << cfg.E << "\n";
  out << "fed.lr=" << io::format_double(cfg.lr) << "\n";
  out << "fed.batch=" << cfg.batch << "\n";
  if (cfg.weighting.has_value()) {
    out << "fed.weighting=" << weighting_name(*cfg.weighting) << "\n";
  }
  if (cfg.download_scope.has_value()) {
    out << "fed.download_scope=" << download_scope_name(*cfg.download_scope) << "\n";
  }
  out << "fed.patience=" << cfg.patience << "\n";
  out << "fed.eval_each_round=" << (cfg.eval_each_round ? "true" : "false") << "\n";
  out << "fed.precision=" << precision_name(cfg.precision) << "\n";
  out << "fed.threads=" << cfg.threads << "\n";
  out << "model.h1=" << cfg.h1 << "\n";
  out << "model.h2=" << cfg.h2 << "\n";
  if (cfg.algorithm == fed::Algorithm::fedmlh) {
    if (!cfg.scheme_path.empty()) {
      out << "scheme.path=" << cfg.scheme_path << "\n";
    } else {
      out << "scheme.B=" << cfg.scheme_B << "\n";
      out << "scheme.R=" << cfg.scheme_R << "\n";
      if (cfg.scheme_seed.has_value()) out << "scheme.seed=" << *cfg.scheme_seed << "\n";
    }
    out << "merge.mode=" << merge_mode_name(cfg.merge_mode) << "\n";
    out << "merge.quantity=" << (cfg.merge_logits ? "logits" : "loglik") << "\n";
  }
  out << "metrics.ks=" << cfg.metrics_ks << "\n";
  return out.str();
}

}  // namespace fedsketch::config
