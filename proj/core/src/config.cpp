#include "stylab/config.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace stylab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: invalid number '" + s + "' for " + where);
  }
}

int64_t parse_int(const std::string& s, const std::string& where) {
  int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config: invalid integer '" + s + "' for " + where);
  return v;
}

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("config: invalid boolean '" + s + "' for " + where + " (use true|false)");
}

std::vector<int> parse_int_list(const std::string& s, const std::string& where) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("config: empty list element in " + where);
    out.push_back(static_cast<int>(parse_int(item, where)));
  }
  if (out.empty()) throw ConfigError("config: empty list for " + where);
  return out;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Entry {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Entry>& schema() {
  static const std::vector<Entry> kSchema = [] {
    std::vector<Entry> e;
    auto add = [&e](const char* sec, const char* key, auto set, auto get) {
      e.push_back(Entry{sec, key, set, get});
    };
    auto dbl = [&add](const char* sec, const char* key, auto member) {
      add(sec, key,
          [member, sec, key](RunConfig& c, const std::string& v) {
            c.*member = parse_double(v, std::string(sec) + "." + key);
          },
          [member](const RunConfig& c) { return fmt_double(c.*member); });
    };
    (void)dbl;

    // [run]
    add("run", "seed",
        [](RunConfig& c, const std::string& v) {
          c.seed = static_cast<uint64_t>(parse_int(v, "run.seed"));
          c.train.seed = c.seed;
        },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("run", "workers",
        [](RunConfig& c, const std::string& v) { c.workers = static_cast<int>(parse_int(v, "run.workers")); },
        [](const RunConfig& c) { return std::to_string(c.workers); });

    // [data]
    add("data", "classes",
        [](RunConfig& c, const std::string& v) { c.data.classes = static_cast<int>(parse_int(v, "data.classes")); },
        [](const RunConfig& c) { return std::to_string(c.data.classes); });
    add("data", "image_size",
        [](RunConfig& c, const std::string& v) {
          c.data.image_size = static_cast<int>(parse_int(v, "data.image_size"));
        },
        [](const RunConfig& c) { return std::to_string(c.data.image_size); });
    add("data", "train_images",
        [](RunConfig& c, const std::string& v) {
          c.data.train_count = static_cast<int>(parse_int(v, "data.train_images"));
        },
        [](const RunConfig& c) { return std::to_string(c.data.train_count); });
    add("data", "test_images",
        [](RunConfig& c, const std::string& v) {
          c.data.test_count = static_cast<int>(parse_int(v, "data.test_images"));
        },
        [](const RunConfig& c) { return std::to_string(c.data.test_count); });
    add("data", "texture_strength",
        [](RunConfig& c, const std::string& v) {
          c.data.texture_strength = parse_double(v, "data.texture_strength");
        },
        [](const RunConfig& c) { return fmt_double(c.data.texture_strength); });

    // [augment]
    struct DK {
      const char* key;
      double AugPolicy::*member;
    };
    static const DK aug_doubles[] = {
        {"crop_area_min", &AugPolicy::crop_area_min},
        {"crop_area_max", &AugPolicy::crop_area_max},
        {"crop_aspect_min", &AugPolicy::crop_aspect_min},
        {"crop_aspect_max", &AugPolicy::crop_aspect_max},
        {"hflip_p", &AugPolicy::hflip_p},
        {"jitter_p", &AugPolicy::jitter_p},
        {"jitter_brightness", &AugPolicy::jitter_brightness},
        {"jitter_contrast", &AugPolicy::jitter_contrast},
        {"jitter_saturation", &AugPolicy::jitter_saturation},
        {"jitter_hue", &AugPolicy::jitter_hue},
        {"grayscale_p", &AugPolicy::grayscale_p},
        {"blur_p_left", &AugPolicy::blur_p_left},
        {"blur_p_right", &AugPolicy::blur_p_right},
        {"blur_sigma_min", &AugPolicy::blur_sigma_min},
        {"blur_sigma_max", &AugPolicy::blur_sigma_max},
        {"solarize_p_left", &AugPolicy::solarize_p_left},
        {"solarize_p_right", &AugPolicy::solarize_p_right},
        {"solarize_threshold", &AugPolicy::solarize_threshold},
    };
    for (const DK& dk : aug_doubles) {
      auto member = dk.member;
      std::string where = std::string("augment.") + dk.key;
      add("augment", dk.key,
          [member, where](RunConfig& c, const std::string& v) {
            c.augment.*member = parse_double(v, where);
          },
          [member](const RunConfig& c) { return fmt_double(c.augment.*member); });
    }
    add("augment", "output_size",
        [](RunConfig& c, const std::string& v) {
          c.augment.output_size = static_cast<int>(parse_int(v, "augment.output_size"));
        },
        [](const RunConfig& c) { return std::to_string(c.augment.output_size); });

    // [sassl]
    static const DK sassl_doubles[] = {
        {"p", nullptr},  // handled below
    };
    (void)sassl_doubles;
    add("sassl", "p",
        [](RunConfig& c, const std::string& v) { c.augment.sassl.p = parse_double(v, "sassl.p"); },
        [](const RunConfig& c) { return fmt_double(c.augment.sassl.p); });
    add("sassl", "alpha_min",
        [](RunConfig& c, const std::string& v) {
          c.augment.sassl.alpha_min = parse_double(v, "sassl.alpha_min");
        },
        [](const RunConfig& c) { return fmt_double(c.augment.sassl.alpha_min); });
    add("sassl", "alpha_max",
        [](RunConfig& c, const std::string& v) {
          c.augment.sassl.alpha_max = parse_double(v, "sassl.alpha_max");
        },
        [](const RunConfig& c) { return fmt_double(c.augment.sassl.alpha_max); });
    add("sassl", "beta_min",
        [](RunConfig& c, const std::string& v) {
          c.augment.sassl.beta_min = parse_double(v, "sassl.beta_min");
        },
        [](const RunConfig& c) { return fmt_double(c.augment.sassl.beta_min); });
    add("sassl", "beta_max",
        [](RunConfig& c, const std::string& v) {
          c.augment.sassl.beta_max = parse_double(v, "sassl.beta_max");
        },
        [](const RunConfig& c) { return fmt_double(c.augment.sassl.beta_max); });
    add("sassl", "style_source",
        [](RunConfig& c, const std::string& v) {
          try {
            c.augment.sassl.style_source = style_source_from_string(v);
          } catch (const std::exception& ex) {
            throw ConfigError(std::string("config: ") + ex.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.augment.sassl.style_source); });
    add("sassl", "views",
        [](RunConfig& c, const std::string& v) {
          try {
            c.augment.sassl_views = sassl_views_from_string(v);
          } catch (const std::exception& ex) {
            throw ConfigError(std::string("config: ") + ex.what());
          }
        },
        [](const RunConfig& c) { return to_string(c.augment.sassl_views); });
    add("sassl", "embed_dim",
        [](RunConfig& c, const std::string& v) {
          c.embed_dim = static_cast<int>(parse_int(v, "sassl.embed_dim"));
        },
        [](const RunConfig& c) { return std::to_string(c.embed_dim); });
    add("sassl", "styled_layers",
        [](RunConfig& c, const std::string& v) {
          c.styled_layers = static_cast<int>(parse_int(v, "sassl.styled_layers"));
        },
        [](const RunConfig& c) { return std::to_string(c.styled_layers); });
    add("sassl", "pairing_offset",
        [](RunConfig& c, const std::string& v) {
          c.pairing_offset = parse_int(v, "sassl.pairing_offset");
        },
        [](const RunConfig& c) { return std::to_string(c.pairing_offset); });

    // [model]
    add("model", "encoder_widths",
        [](RunConfig& c, const std::string& v) {
          c.model.encoder_widths = parse_int_list(v, "model.encoder_widths");
        },
        [](const RunConfig& c) { return fmt_int_list(c.model.encoder_widths); });
    add("model", "projector_hidden",
        [](RunConfig& c, const std::string& v) {
          c.model.projector_hidden = static_cast<int>(parse_int(v, "model.projector_hidden"));
        },
        [](const RunConfig& c) { return std::to_string(c.model.projector_hidden); });
    add("model", "projector_out",
        [](RunConfig& c, const std::string& v) {
          c.model.projector_out = static_cast<int>(parse_int(v, "model.projector_out"));
        },
        [](const RunConfig& c) { return std::to_string(c.model.projector_out); });
    add("model", "use_momentum_encoder",
        [](RunConfig& c, const std::string& v) {
          c.model.use_momentum_encoder = parse_bool(v, "model.use_momentum_encoder");
        },
        [](const RunConfig& c) { return c.model.use_momentum_encoder ? "true" : "false"; });
    add("model", "use_predictor",
        [](RunConfig& c, const std::string& v) {
          c.model.use_predictor = parse_bool(v, "model.use_predictor");
        },
        [](const RunConfig& c) { return c.model.use_predictor ? "true" : "false"; });

    // [train]
    add("train", "temperature",
        [](RunConfig& c, const std::string& v) {
          c.train.temperature = parse_double(v, "train.temperature");
        },
        [](const RunConfig& c) { return fmt_double(c.train.temperature); });
    add("train", "peak_lr",
        [](RunConfig& c, const std::string& v) { c.train.peak_lr = parse_double(v, "train.peak_lr"); },
        [](const RunConfig& c) { return fmt_double(c.train.peak_lr); });
    add("train", "warmup_frac",
        [](RunConfig& c, const std::string& v) {
          c.train.warmup_frac = parse_double(v, "train.warmup_frac");
        },
        [](const RunConfig& c) { return fmt_double(c.train.warmup_frac); });
    add("train", "epochs",
        [](RunConfig& c, const std::string& v) {
          c.train.epochs = static_cast<int>(parse_int(v, "train.epochs"));
        },
        [](const RunConfig& c) { return std::to_string(c.train.epochs); });
    add("train", "max_steps",
        [](RunConfig& c, const std::string& v) { c.train.max_steps = parse_int(v, "train.max_steps"); },
        [](const RunConfig& c) { return std::to_string(c.train.max_steps); });
    add("train", "weight_decay",
        [](RunConfig& c, const std::string& v) {
          c.train.weight_decay = parse_double(v, "train.weight_decay");
        },
        [](const RunConfig& c) { return fmt_double(c.train.weight_decay); });
    add("train", "trust_coeff",
        [](RunConfig& c, const std::string& v) {
          c.train.trust_coeff = parse_double(v, "train.trust_coeff");
        },
        [](const RunConfig& c) { return fmt_double(c.train.trust_coeff); });
    add("train", "momentum_start",
        [](RunConfig& c, const std::string& v) {
          c.train.momentum_start = parse_double(v, "train.momentum_start");
        },
        [](const RunConfig& c) { return fmt_double(c.train.momentum_start); });
    add("train", "sgd_momentum",
        [](RunConfig& c, const std::string& v) {
          c.train.sgd_momentum = parse_double(v, "train.sgd_momentum");
        },
        [](const RunConfig& c) { return fmt_double(c.train.sgd_momentum); });
    add("train", "batch_size",
        [](RunConfig& c, const std::string& v) {
          c.train.batch_size = static_cast<int>(parse_int(v, "train.batch_size"));
        },
        [](const RunConfig& c) { return std::to_string(c.train.batch_size); });

    // [paths]
    add("paths", "style_bank",
        [](RunConfig& c, const std::string& v) { c.paths.style_bank = v; },
        [](const RunConfig& c) { return c.paths.style_bank; });
    add("paths", "output_dir",
        [](RunConfig& c, const std::string& v) { c.paths.output_dir = v; },
        [](const RunConfig& c) { return c.paths.output_dir; });

    return e;
  }();
  return kSchema;
}

}  // namespace

void RunConfig::validate() const {
  augment.validate();
  train.validate();
  if (data.classes < 1 || data.train_count < 1 || data.test_count < 0)
    throw ConfigError("config: invalid data section");
  if (embed_dim < 1) throw ConfigError("config: sassl.embed_dim must be positive");
  if (styled_layers < 0 || styled_layers > StylizationNetwork::kStyledLayerCount)
    throw ConfigError("config: sassl.styled_layers must lie in [0,13]");
  if (workers < 0) throw ConfigError("config: run.workers must be non-negative");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const Entry& e : schema()) known = known || e.section == section;
      if (!known)
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Entry* found = nullptr;
    for (const Entry& e : schema())
      if (e.section == section && e.key == key) {
        found = &e;
        break;
      }
    if (!found)
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + section +
                        "." + key + "'");
    found->set(cfg, value);
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Entry& e : schema()) {
    if (e.section != section) {
      if (!out.empty()) out += "\n";
      out += "[" + e.section + "]\n";
      section = e.section;
    }
    out += e.key + " = " + e.get(cfg) + "\n";
  }
  return out;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void save_config_file(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("config: cannot write '" + path + "'");
  out << serialize_config(cfg);
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace stylab
