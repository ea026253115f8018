#include "gmerge/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gmerge {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

DomainSpec parse_domain(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() != 2 || parts[0].empty())
    throw std::invalid_argument("config: bad domain spec '" + s +
                                "', expected tag:edge_prob");
  return {parts[0], std::stod(parts[1])};
}

ExpertSpec parse_expert(const std::string& s) {
  auto parts = split(s, ':');
  if (parts.size() < 2 || parts.size() > 3)
    throw std::invalid_argument("config: bad expert spec '" + s +
                                "', expected ARCH:domain[:seed]");
  ExpertSpec e;
  e.kind = gnn_kind_from_string(parts[0]);
  e.domain = parts[1];
  if (parts.size() == 3) e.seed = std::stoull(parts[2]);
  return e;
}

}  // namespace

std::vector<std::string> ExperimentConfig::all_domain_tags() const {
  std::vector<std::string> tags;
  if (source == DataSource::Synthetic) {
    for (const DomainSpec& d : domains) tags.push_back(d.tag);
    tags.push_back(target.tag);
  } else {
    for (std::size_t i = 0; i + 1 < split_fractions.size(); ++i)
      tags.push_back(std::string(1, static_cast<char>('A' + i)));
    tags.push_back("T");
  }
  return tags;
}

void ExperimentConfig::validate() const {
  if (roster.empty())
    throw std::invalid_argument("config: expert roster is empty");
  auto tags = all_domain_tags();
  for (const ExpertSpec& e : roster) {
    bool found = false;
    for (const std::string& t : tags)
      if (t == e.domain) found = true;
    if (!found)
      throw std::invalid_argument("config: expert domain " + e.domain +
                                  " is not a configured domain tag");
  }
  if (source == DataSource::Tu && tu_dir.empty())
    throw std::invalid_argument("config: source=tu needs tu_dir");
  if (merge_k < 1 || merge_k > static_cast<int>(roster.size()))
    throw std::invalid_argument("config: k outside [1, roster size]");
  if (gen_nodes_min < 2 || gen_nodes_min > gen_nodes_max)
    throw std::invalid_argument("config: bad generation nodes range");
  if (gamma_v <= 0.0)
    throw std::invalid_argument("config: gamma_v must be positive");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = t.substr(1, t.size() - 2);
      if (section != "dataset" && section != "split" && section != "experts" &&
          section != "generation" && section != "merge" && section != "eval" &&
          section != "run")
        throw std::invalid_argument("config: unknown section [" + section +
                                    "] at line " + std::to_string(line_no));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " +
                                  std::to_string(line_no));
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto fail = [&]() -> void {
      throw std::invalid_argument("config: unknown key '" + key +
                                  "' in section [" + section + "] at line " +
                                  std::to_string(line_no));
    };
    if (section == "dataset") {
      if (key == "source") {
        if (value == "synthetic")
          cfg.source = DataSource::Synthetic;
        else if (value == "tu")
          cfg.source = DataSource::Tu;
        else
          throw std::invalid_argument("config: bad source " + value);
      } else if (key == "domains") {
        cfg.domains.clear();
        for (const std::string& d : split(value, ','))
          cfg.domains.push_back(parse_domain(d));
      } else if (key == "target") {
        cfg.target = parse_domain(value);
      } else if (key == "graphs_per_domain") {
        cfg.graphs_per_domain = std::stoi(value);
      } else if (key == "nodes_min") {
        cfg.data_nodes_min = std::stoi(value);
      } else if (key == "nodes_max") {
        cfg.data_nodes_max = std::stoi(value);
      } else if (key == "feature_buckets") {
        cfg.feature_buckets = std::stoi(value);
      } else if (key == "tu_dir") {
        cfg.tu_dir = value;
      } else {
        fail();
      }
    } else if (section == "split") {
      if (key == "fractions") {
        cfg.split_fractions.clear();
        for (const std::string& f : split(value, ','))
          cfg.split_fractions.push_back(std::stod(f));
      } else {
        fail();
      }
    } else if (section == "experts") {
      if (key == "roster") {
        cfg.roster.clear();
        for (const std::string& e : split(value, ','))
          cfg.roster.push_back(parse_expert(e));
      } else if (key == "hidden_dim") {
        cfg.hidden_dim = std::stoi(value);
      } else if (key == "epochs") {
        cfg.pretrain_epochs = std::stoi(value);
      } else if (key == "batch_size") {
        cfg.pretrain_batch = std::stoi(value);
      } else if (key == "lr") {
        cfg.pretrain_lr = std::stod(value);
      } else if (key == "weight_decay") {
        cfg.pretrain_weight_decay = std::stod(value);
      } else {
        fail();
      }
    } else if (section == "generation") {
      if (key == "count_per_expert") {
        cfg.gen_count = std::stoi(value);
      } else if (key == "nodes_min") {
        cfg.gen_nodes_min = std::stoi(value);
      } else if (key == "nodes_max") {
        cfg.gen_nodes_max = std::stoi(value);
      } else if (key == "tau") {
        cfg.gen_tau = std::stod(value);
      } else if (key == "anneal_tau") {
        cfg.gen_anneal = parse_bool(key, value);
      } else if (key == "tau_final") {
        cfg.gen_tau_final = std::stod(value);
      } else if (key == "epochs") {
        cfg.gen_epochs = std::stoi(value);
      } else if (key == "lr_inputs") {
        cfg.gen_lr_inputs = std::stod(value);
      } else if (key == "lr_encoder") {
        cfg.gen_lr_encoder = std::stod(value);
      } else if (key == "weight_decay") {
        cfg.gen_weight_decay = std::stod(value);
      } else if (key == "encoder_hidden") {
        cfg.gen_encoder_hidden = std::stoi(value);
      } else if (key == "gumbel_noise") {
        cfg.gen_noise = parse_bool(key, value);
      } else if (key == "center_scores") {
        cfg.gen_center_scores = parse_bool(key, value);
      } else {
        fail();
      }
    } else if (section == "merge") {
      if (key == "k") {
        cfg.merge_k = std::stoi(value);
      } else if (key == "lambda_gate") {
        cfg.lambda_gate = std::stod(value);
      } else if (key == "lambda_mask") {
        cfg.lambda_mask = std::stod(value);
      } else if (key == "gamma_p") {
        cfg.gamma_p = std::stod(value);
      } else if (key == "gamma_v") {
        cfg.gamma_v = std::stod(value);
      } else if (key == "epochs") {
        cfg.merge_epochs = std::stoi(value);
      } else if (key == "batch_size") {
        cfg.merge_batch = std::stoi(value);
      } else if (key == "lr") {
        cfg.merge_lr = std::stod(value);
      } else if (key == "weight_decay") {
        cfg.merge_weight_decay = std::stod(value);
      } else if (key == "mask_position") {
        cfg.mask_position = mask_position_from_string(value);
      } else if (key == "mask_study") {
        cfg.mask_study = parse_bool(key, value);
      } else {
        fail();
      }
    } else if (section == "eval") {
      if (key == "inverse_x") {
        cfg.eval_inverse_x = parse_bool(key, value);
      } else if (key == "divergence") {
        cfg.eval_divergence = parse_bool(key, value);
      } else if (key == "cross_error") {
        cfg.eval_cross_error = parse_bool(key, value);
      } else {
        fail();
      }
    } else if (section == "run") {
      if (key == "seed") {
        cfg.seed = std::stoull(value);
      } else if (key == "out_dir") {
        cfg.out_dir = value;
      } else if (key == "quiet") {
        cfg.quiet = parse_bool(key, value);
      } else {
        fail();
      }
    } else {
      throw std::invalid_argument("config: key '" + key +
                                  "' outside any section at line " +
                                  std::to_string(line_no));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[dataset]\n";
  os << "source = " << (cfg.source == DataSource::Synthetic ? "synthetic" : "tu")
     << "\n";
  os << "domains = ";
  for (std::size_t i = 0; i < cfg.domains.size(); ++i)
    os << (i ? "," : "") << cfg.domains[i].tag << ":"
       << fmt(cfg.domains[i].edge_prob);
  os << "\n";
  os << "target = " << cfg.target.tag << ":" << fmt(cfg.target.edge_prob)
     << "\n";
  os << "graphs_per_domain = " << cfg.graphs_per_domain << "\n";
  os << "nodes_min = " << cfg.data_nodes_min << "\n";
  os << "nodes_max = " << cfg.data_nodes_max << "\n";
  os << "feature_buckets = " << cfg.feature_buckets << "\n";
  os << "tu_dir = " << cfg.tu_dir << "\n";
  os << "[split]\n";
  os << "fractions = ";
  for (std::size_t i = 0; i < cfg.split_fractions.size(); ++i)
    os << (i ? "," : "") << fmt(cfg.split_fractions[i]);
  os << "\n";
  os << "[experts]\n";
  os << "roster = ";
  for (std::size_t i = 0; i < cfg.roster.size(); ++i) {
    os << (i ? "," : "") << to_string(cfg.roster[i].kind) << ":"
       << cfg.roster[i].domain;
    if (cfg.roster[i].seed) os << ":" << *cfg.roster[i].seed;
  }
  os << "\n";
  os << "hidden_dim = " << cfg.hidden_dim << "\n";
  os << "epochs = " << cfg.pretrain_epochs << "\n";
  os << "batch_size = " << cfg.pretrain_batch << "\n";
  os << "lr = " << fmt(cfg.pretrain_lr) << "\n";
  os << "weight_decay = " << fmt(cfg.pretrain_weight_decay) << "\n";
  os << "[generation]\n";
  os << "count_per_expert = " << cfg.gen_count << "\n";
  os << "nodes_min = " << cfg.gen_nodes_min << "\n";
  os << "nodes_max = " << cfg.gen_nodes_max << "\n";
  os << "tau = " << fmt(cfg.gen_tau) << "\n";
  os << "anneal_tau = " << (cfg.gen_anneal ? "on" : "off") << "\n";
  os << "tau_final = " << fmt(cfg.gen_tau_final) << "\n";
  os << "epochs = " << cfg.gen_epochs << "\n";
  os << "lr_inputs = " << fmt(cfg.gen_lr_inputs) << "\n";
  os << "lr_encoder = " << fmt(cfg.gen_lr_encoder) << "\n";
  os << "weight_decay = " << fmt(cfg.gen_weight_decay) << "\n";
  os << "encoder_hidden = " << cfg.gen_encoder_hidden << "\n";
  os << "gumbel_noise = " << (cfg.gen_noise ? "on" : "off") << "\n";
  os << "center_scores = " << (cfg.gen_center_scores ? "on" : "off") << "\n";
  os << "[merge]\n";
  os << "k = " << cfg.merge_k << "\n";
  os << "lambda_gate = " << fmt(cfg.lambda_gate) << "\n";
  os << "lambda_mask = " << fmt(cfg.lambda_mask) << "\n";
  os << "gamma_p = " << fmt(cfg.gamma_p) << "\n";
  os << "gamma_v = " << fmt(cfg.gamma_v) << "\n";
  os << "epochs = " << cfg.merge_epochs << "\n";
  os << "batch_size = " << cfg.merge_batch << "\n";
  os << "lr = " << fmt(cfg.merge_lr) << "\n";
  os << "weight_decay = " << fmt(cfg.merge_weight_decay) << "\n";
  os << "mask_position = " << to_string(cfg.mask_position) << "\n";
  os << "mask_study = " << (cfg.mask_study ? "on" : "off") << "\n";
  os << "[eval]\n";
  os << "inverse_x = " << (cfg.eval_inverse_x ? "on" : "off") << "\n";
  os << "divergence = " << (cfg.eval_divergence ? "on" : "off") << "\n";
  os << "cross_error = " << (cfg.eval_cross_error ? "on" : "off") << "\n";
  os << "[run]\n";
  os << "seed = " << cfg.seed << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "quiet = " << (cfg.quiet ? "on" : "off") << "\n";
  return os.str();
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path);
  out << serialize_config(cfg);
}

}  // namespace gmerge
