#include "dsal/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dsal/error.hpp"

namespace dsal {

ModelConfig ModelConfig::from_variant(const std::string& name) {
  ModelConfig cfg;
  std::string rest = name;
  auto eat = [&rest](const std::string& prefix) {
    if (rest.rfind(prefix, 0) == 0) {
      rest = rest.substr(prefix.size());
      return true;
    }
    return false;
  };
  if (eat("RGBD"))
    cfg.streams = StreamSet::rgbd;
  else if (eat("RGB"))
    cfg.streams = StreamSet::rgb_only;
  else if (eat("Depth"))
    cfg.streams = StreamSet::depth_only;
  else
    throw Error("config-error", "unknown variant '" + name + "'");
  if (eat("16"))
    cfg.channels = 16;
  else if (eat("64"))
    cfg.channels = 64;
  else
    throw Error("config-error",
                "variant '" + name + "': channel width must be 16 or 64");
  if (eat("SC"))
    cfg.head = HeadType::sc;
  else if (eat("MF"))
    cfg.head = HeadType::mf;
  else
    throw Error("config-error", "variant '" + name + "': head must be SC or MF");
  cfg.fusion = FusionScheme::none;
  if (!rest.empty()) {
    if (rest == "_ADD")
      cfg.fusion = FusionScheme::add;
    else if (rest == "_CON")
      cfg.fusion = FusionScheme::con;
    else if (rest == "_CLL")
      cfg.fusion = FusionScheme::cll;
    else
      throw Error("config-error",
                  "variant '" + name + "': unknown suffix '" + rest + "'");
  }
  cfg.validate();
  return cfg;
}

std::string ModelConfig::variant() const {
  std::string s;
  switch (streams) {
    case StreamSet::rgb_only: s = "RGB"; break;
    case StreamSet::depth_only: s = "Depth"; break;
    case StreamSet::rgbd: s = "RGBD"; break;
  }
  s += std::to_string(channels);
  s += head == HeadType::sc ? "SC" : "MF";
  switch (fusion) {
    case FusionScheme::add: s += "_ADD"; break;
    case FusionScheme::con: s += "_CON"; break;
    case FusionScheme::cll: s += "_CLL"; break;
    case FusionScheme::none: break;
  }
  return s;
}

void ModelConfig::validate() const {
  if (channels != 16 && channels != 64)
    throw Error("config-error", "model.channels must be 16 or 64");
  if (head == HeadType::sc && fusion != FusionScheme::none)
    throw Error("config-error",
                "SC head takes no fusion scheme (two-stream SC concatenates "
                "the DSAM maps)");
  if (head == HeadType::mf) {
    if (two_stream() && fusion == FusionScheme::none)
      throw Error("config-error",
                  "RGBD MF variants need a fusion scheme (ADD, CON or CLL)");
    if (!two_stream() && fusion != FusionScheme::none)
      throw Error("config-error",
                  "fusion scheme is only meaningful for two-stream variants");
  }
  if (input_size != 112 || window != 16)
    throw Error("config-error", "input geometry is fixed at 112x112x16");
}

void TrainConfig::validate() const {
  if (total_epochs < 1)
    throw Error("config-error", "train.total_epochs must be >= 1");
  if (micro_batch < 1)
    throw Error("config-error", "train.micro_batch must be >= 1");
  if (effective_batch < 1 || effective_batch % micro_batch != 0)
    throw Error("config-error",
                "train.effective_batch must be a positive multiple of "
                "train.micro_batch");
  for (size_t i = 0; i < lr_milestones.size(); i++) {
    if (lr_milestones[i] >= total_epochs)
      throw Error("config-error",
                  "train.lr_milestones must be < total_epochs");
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
      throw Error("config-error",
                  "train.lr_milestones must be strictly increasing");
  }
  if (flip_p < 0.0 || flip_p > 1.0)
    throw Error("config-error", "train.flip_p must be in [0,1]");
  if (momentum < 0.0 || momentum >= 1.0)
    throw Error("config-error", "train.momentum must be in [0,1)");
  loss_weights.validate();
}

namespace {

struct KeyValue {
  std::string key;  // section.key
  std::string value;
  int lineno = 0;
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config-error", key + ": expected a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int d = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config-error", key + ": expected an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error("config-error",
                key + ": expected an unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config-error", key + ": expected true/false, got '" + v + "'");
}

std::array<float, 3> parse_f3(const std::string& key, const std::string& v) {
  auto parts = split_list(v);
  if (parts.size() == 1) {
    const float x = static_cast<float>(parse_double(key, parts[0]));
    return {x, x, x};
  }
  if (parts.size() == 3)
    return {static_cast<float>(parse_double(key, parts[0])),
            static_cast<float>(parse_double(key, parts[1])),
            static_cast<float>(parse_double(key, parts[2]))};
  throw Error("config-error", key + ": expected 1 or 3 comma-separated values");
}

void apply_key(RunConfig& cfg, const std::string& key,
               const std::string& value) {
  static const std::map<std::string,
                        std::function<void(RunConfig&, const std::string&)>>
      handlers = {
          {"model.variant",
           [](RunConfig& c, const std::string& v) {
             c.model = ModelConfig::from_variant(v);
           }},
          {"model.fusion",
           [](RunConfig& c, const std::string& v) {
             if (v == "ADD")
               c.model.fusion = FusionScheme::add;
             else if (v == "CON")
               c.model.fusion = FusionScheme::con;
             else if (v == "CLL")
               c.model.fusion = FusionScheme::cll;
             else if (v == "none")
               c.model.fusion = FusionScheme::none;
             else
               throw Error("config-error", "model.fusion: unknown scheme '" +
                                               v + "'");
           }},
          {"train.total_epochs",
           [](RunConfig& c, const std::string& v) {
             c.train.total_epochs = parse_int("train.total_epochs", v);
           }},
          {"train.momentum",
           [](RunConfig& c, const std::string& v) {
             c.train.momentum = parse_double("train.momentum", v);
           }},
          {"train.weight_decay",
           [](RunConfig& c, const std::string& v) {
             c.train.weight_decay = parse_double("train.weight_decay", v);
           }},
          {"train.lr_backbone",
           [](RunConfig& c, const std::string& v) {
             c.train.lr_backbone = parse_double("train.lr_backbone", v);
           }},
          {"train.lr_heads",
           [](RunConfig& c, const std::string& v) {
             c.train.lr_heads = parse_double("train.lr_heads", v);
           }},
          {"train.effective_batch",
           [](RunConfig& c, const std::string& v) {
             c.train.effective_batch = parse_int("train.effective_batch", v);
           }},
          {"train.micro_batch",
           [](RunConfig& c, const std::string& v) {
             c.train.micro_batch = parse_int("train.micro_batch", v);
           }},
          {"train.lr_milestones",
           [](RunConfig& c, const std::string& v) {
             c.train.lr_milestones.clear();
             for (const std::string& m : split_list(v))
               if (!m.empty())
                 c.train.lr_milestones.push_back(
                     parse_int("train.lr_milestones", m));
           }},
          {"train.lr_gamma",
           [](RunConfig& c, const std::string& v) {
             c.train.lr_gamma = parse_double("train.lr_gamma", v);
           }},
          {"train.seed",
           [](RunConfig& c, const std::string& v) {
             c.train.seed = parse_u64("train.seed", v);
           }},
          {"train.flip_p",
           [](RunConfig& c, const std::string& v) {
             c.train.flip_p = parse_double("train.flip_p", v);
           }},
          {"train.bn_batch_stats",
           [](RunConfig& c, const std::string& v) {
             c.train.bn_batch_stats = parse_bool("train.bn_batch_stats", v);
           }},
          {"train.train_stride",
           [](RunConfig& c, const std::string& v) {
             c.train.train_stride = parse_int("train.train_stride", v);
           }},
          {"train.max_steps",
           [](RunConfig& c, const std::string& v) {
             c.train.max_steps = parse_int("train.max_steps", v);
           }},
          {"train.ckpt_keep",
           [](RunConfig& c, const std::string& v) {
             c.train.ckpt_keep = parse_int("train.ckpt_keep", v);
           }},
          {"train.resume",
           [](RunConfig& c, const std::string& v) { c.train.resume = v; }},
          {"train.loss_w1",
           [](RunConfig& c, const std::string& v) {
             c.train.loss_weights.w1 = parse_double("train.loss_w1", v);
           }},
          {"train.loss_w2",
           [](RunConfig& c, const std::string& v) {
             c.train.loss_weights.w2 = parse_double("train.loss_w2", v);
           }},
          {"train.loss_w3",
           [](RunConfig& c, const std::string& v) {
             c.train.loss_weights.w3 = parse_double("train.loss_w3", v);
           }},
          {"data.manifests",
           [](RunConfig& c, const std::string& v) {
             c.data.manifests = split_list(v);
           }},
          {"data.gt_sigma_frac",
           [](RunConfig& c, const std::string& v) {
             c.data.gt_sigma_frac = parse_double("data.gt_sigma_frac", v);
           }},
          {"data.norm_mean",
           [](RunConfig& c, const std::string& v) {
             c.data.norm_mean = parse_f3("data.norm_mean", v);
           }},
          {"data.norm_std",
           [](RunConfig& c, const std::string& v) {
             c.data.norm_std = parse_f3("data.norm_std", v);
           }},
          {"eval.sauc_splits",
           [](RunConfig& c, const std::string& v) {
             c.eval.sauc_splits = parse_int("eval.sauc_splits", v);
           }},
          {"eval.sauc_seed",
           [](RunConfig& c, const std::string& v) {
             c.eval.sauc_seed = parse_u64("eval.sauc_seed", v);
           }},
          {"eval.batch",
           [](RunConfig& c, const std::string& v) {
             c.eval.batch = parse_int("eval.batch", v);
           }},
          {"model.pretrained_backbone",
           [](RunConfig& c, const std::string& v) {
             c.pretrained_backbone = v;
           }},
      };
  auto it = handlers.find(key);
  if (it == handlers.end())
    throw Error("config-error", "unknown configuration key '" + key + "'");
  it->second(cfg, value);
}

void apply_entries(RunConfig& cfg, const std::vector<KeyValue>& entries) {
  // model.variant resets the whole model block; apply it before any other
  // model.* keys so explicit fields act as overrides.
  for (const KeyValue& kv : entries)
    if (kv.key == "model.variant") apply_key(cfg, kv.key, kv.value);
  for (const KeyValue& kv : entries)
    if (kv.key != "model.variant") apply_key(cfg, kv.key, kv.value);
}

std::vector<KeyValue> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open config file " + path);
  std::vector<KeyValue> out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error("config-error", path + " line " + std::to_string(lineno) +
                                        ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config-error", path + " line " + std::to_string(lineno) +
                                      ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos)
      key = section + "." + key;
    out.push_back({key, trim(line.substr(eq + 1)), lineno});
  }
  return out;
}

std::vector<KeyValue> parse_overrides(const std::vector<std::string>& ovr) {
  std::vector<KeyValue> out;
  for (const std::string& o : ovr) {
    const size_t eq = o.find('=');
    if (eq == std::string::npos)
      throw Error("config-error", "override '" + o + "': expected key=value");
    out.push_back({trim(o.substr(0, eq)), trim(o.substr(eq + 1)), 0});
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  RunConfig cfg;
  apply_entries(cfg, parse_file(path));
  apply_entries(cfg, parse_overrides(overrides));
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

RunConfig run_config_from_overrides(
    const std::vector<std::string>& overrides) {
  RunConfig cfg;
  apply_entries(cfg, parse_overrides(overrides));
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "[model]\n";
  os << "variant = " << cfg.model.variant() << "\n";
  if (!cfg.pretrained_backbone.empty())
    os << "pretrained_backbone = " << cfg.pretrained_backbone << "\n";
  os << "\n[train]\n";
  os << "total_epochs = " << cfg.train.total_epochs << "\n";
  os << "momentum = " << num(cfg.train.momentum) << "\n";
  os << "weight_decay = " << num(cfg.train.weight_decay) << "\n";
  os << "lr_backbone = " << num(cfg.train.lr_backbone) << "\n";
  os << "lr_heads = " << num(cfg.train.lr_heads) << "\n";
  os << "effective_batch = " << cfg.train.effective_batch << "\n";
  os << "micro_batch = " << cfg.train.micro_batch << "\n";
  os << "lr_milestones = ";
  for (size_t i = 0; i < cfg.train.lr_milestones.size(); i++)
    os << (i ? "," : "") << cfg.train.lr_milestones[i];
  os << "\n";
  os << "lr_gamma = " << num(cfg.train.lr_gamma) << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "flip_p = " << num(cfg.train.flip_p) << "\n";
  os << "bn_batch_stats = " << (cfg.train.bn_batch_stats ? "true" : "false")
     << "\n";
  os << "train_stride = " << cfg.train.train_stride << "\n";
  os << "max_steps = " << cfg.train.max_steps << "\n";
  os << "ckpt_keep = " << cfg.train.ckpt_keep << "\n";
  if (!cfg.train.resume.empty()) os << "resume = " << cfg.train.resume << "\n";
  os << "loss_w1 = " << num(cfg.train.loss_weights.w1) << "\n";
  os << "loss_w2 = " << num(cfg.train.loss_weights.w2) << "\n";
  os << "loss_w3 = " << num(cfg.train.loss_weights.w3) << "\n";
  os << "\n[data]\n";
  os << "manifests = ";
  for (size_t i = 0; i < cfg.data.manifests.size(); i++)
    os << (i ? "," : "") << cfg.data.manifests[i];
  os << "\n";
  os << "gt_sigma_frac = " << num(cfg.data.gt_sigma_frac) << "\n";
  os << "norm_mean = " << num(cfg.data.norm_mean[0]) << ","
     << num(cfg.data.norm_mean[1]) << "," << num(cfg.data.norm_mean[2])
     << "\n";
  os << "norm_std = " << num(cfg.data.norm_std[0]) << ","
     << num(cfg.data.norm_std[1]) << "," << num(cfg.data.norm_std[2]) << "\n";
  os << "\n[eval]\n";
  os << "sauc_splits = " << cfg.eval.sauc_splits << "\n";
  os << "sauc_seed = " << cfg.eval.sauc_seed << "\n";
  os << "batch = " << cfg.eval.batch << "\n";
  return os.str();
}

}  // namespace dsal
