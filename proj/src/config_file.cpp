#include "basgcn/harness.hpp"

#include <fstream>

namespace basgcn {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value, int min_value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    if (v < min_value) {
      throw std::runtime_error("config: " + key + " must be >= " + std::to_string(min_value));
    }
    return v;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    throw std::runtime_error("config: bad integer for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (...) {
    throw std::runtime_error("config: bad number for " + key + ": '" + value + "'");
  }
}

}  // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset") {
    cfg.dataset = value;
  } else if (key == "data_dir") {
    cfg.data_dir = value;
  } else if (key == "cache_dir") {
    cfg.cache_dir = value;
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "m") {
    cfg.model.grid_size = parse_int(key, value, 1);
  } else if (key == "levels") {
    cfg.model.levels = parse_int(key, value, 1);
  } else if (key == "layers") {
    cfg.model.conv_layers = parse_int(key, value, 0);
  } else if (key == "filters") {
    cfg.model.conv_filters = parse_int(key, value, 1);
  } else if (key == "epochs") {
    cfg.model.epochs = parse_int(key, value, 1);
  } else if (key == "batch_size") {
    cfg.model.batch_size = parse_int(key, value, 1);
  } else if (key == "folds") {
    cfg.folds = parse_int(key, value, 2);
  } else if (key == "repeats") {
    cfg.repeats = parse_int(key, value, 1);
  } else if (key == "threads") {
    cfg.threads = parse_int(key, value, 1);
  } else if (key == "lr") {
    cfg.model.learning_rate = parse_real(key, value);
  } else if (key == "dropout") {
    double d = parse_real(key, value);
    if (d < 0 || d >= 1) throw std::runtime_error("config: dropout must be in [0,1)");
    cfg.model.dropout_rate = d;
  } else if (key == "seed") {
    try {
      cfg.model.seed = std::stoull(value);
    } catch (...) {
      throw std::runtime_error("config: bad seed: '" + value + "'");
    }
  } else if (key == "mode") {
    if (value == "directed") {
      cfg.mode = EdgeMode::directed;
    } else if (value == "undirected") {
      cfg.mode = EdgeMode::undirected;
    } else {
      throw std::runtime_error("config: mode must be directed or undirected, got '" + value + "'");
    }
  } else if (key == "prototypes") {
    if (value == "transductive") {
      cfg.prototypes = PrototypeMode::transductive;
    } else if (value == "inductive") {
      cfg.prototypes = PrototypeMode::inductive;
    } else {
      throw std::runtime_error("config: prototypes must be transductive or inductive, got '" + value + "'");
    }
  } else {
    throw std::runtime_error("config: unknown key '" + key + "'");
  }
}

void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace basgcn
