#include "hdas/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "hdas/error.hpp"

namespace hdas {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Key {
  std::string name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

Key int_key(std::string name, int& ref, int min) {
  return {std::move(name),
          [&ref, min](const std::string& v) {
            const int x = parse_number<int>(v);
            if (x < min) throw std::invalid_argument("must be >= " + std::to_string(min));
            ref = x;
          },
          [&ref] { return std::to_string(ref); }};
}

Key u64_key(std::string name, std::uint64_t& ref) {
  return {std::move(name), [&ref](const std::string& v) { ref = parse_number<std::uint64_t>(v); },
          [&ref] { return std::to_string(ref); }};
}

Key real_key(std::string name, double& ref, bool positive) {
  return {std::move(name),
          [&ref, positive](const std::string& v) {
            const double x = parse_number<double>(v);
            if (positive ? !(x > 0.0) : !(x >= 0.0)) {
              throw std::invalid_argument(positive ? "must be positive" : "must be non-negative");
            }
            ref = x;
          },
          [&ref] { return fmt(ref); }};
}

Key bool_key(std::string name, bool& ref) {
  return {std::move(name), [&ref](const std::string& v) { ref = parse_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

Key string_key(std::string name, std::string& ref) {
  return {std::move(name), [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

std::vector<Key> keys(Config& c) {
  SearchConfig& s = c.search;
  EvalConfig& e = c.eval;
  return {
      {"data.kind",
       [&c](const std::string& v) {
         if (v != "toy" && v != "cifar10") throw std::invalid_argument("expected toy or cifar10");
         c.data.kind = v;
       },
       [&c] { return c.data.kind; }},
      string_key("data.train_path", c.data.train_path),
      string_key("data.test_path", c.data.test_path),
      int_key("data.image_size", c.data.image_size, 4),
      int_key("data.train_size", c.data.train_size, 2),
      int_key("data.test_size", c.data.test_size, 1),
      real_key("data.noise", c.data.noise, false),
      u64_key("data.seed", c.data.seed),
      int_key("data.search_subset", c.data.search_subset, 0),
      int_key("search.epochs", s.epochs, 1),
      int_key("search.batch_size", s.batch_size, 2),
      int_key("search.init_channels", s.init_channels, 1),
      int_key("search.n_intermediate", s.n_intermediate, 1),
      int_key("search.multiplier", s.multiplier, 1),
      bool_key("search.stage_specific_cells", s.stage_specific_cells),
      {"search.cells_per_stage",
       [&s](const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) throw std::invalid_argument("expected three counts");
         for (std::size_t i = 0; i < 3; ++i) {
           s.cells_per_stage[i] = parse_number<int>(items[i]);
           if (s.cells_per_stage[i] < 1) throw std::invalid_argument("counts must be positive");
         }
       },
       [&s] {
         return std::to_string(s.cells_per_stage[0]) + ", " + std::to_string(s.cells_per_stage[1]) + ", " +
                std::to_string(s.cells_per_stage[2]);
       }},
      real_key("search.weight_lr", s.weight_opt.lr, true),
      real_key("search.weight_momentum", s.weight_opt.momentum, false),
      real_key("search.weight_decay", s.weight_opt.weight_decay, false),
      real_key("search.grad_clip", s.weight_opt.grad_clip, false),
      real_key("search.arch_lr", s.arch_opt.lr, true),
      real_key("search.arch_beta1", s.arch_opt.beta1, false),
      real_key("search.arch_beta2", s.arch_opt.beta2, false),
      real_key("search.arch_weight_decay", s.arch_opt.weight_decay, false),
      u64_key("search.seed", s.seed),
      int_key("stage.window_m", s.window_m, 2),
      int_key("stage.n_min", s.n_min, 2),
      int_key("stage.extra_cells", s.extra_cells, 0),
      real_key("losses.delta", s.delta, false),
      real_key("losses.gamma", s.gamma, false),
      {"losses.theta",
       [&s](const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 3) throw std::invalid_argument("expected three weights");
         std::vector<double> t;
         for (const auto& it : items) {
           t.push_back(parse_number<double>(it));
           if (!(t.back() > 0.0)) throw std::invalid_argument("weights must be positive");
         }
         s.theta = t;
       },
       [&s] { return fmt(s.theta[0]) + ", " + fmt(s.theta[1]) + ", " + fmt(s.theta[2]); }},
      bool_key("depth_loss.normalize_window", s.normalize_window),
      int_key("eval.epochs", e.epochs, 0),
      int_key("eval.batch_size", e.batch_size, 2),
      real_key("eval.lr", e.sgd.lr, true),
      real_key("eval.momentum", e.sgd.momentum, false),
      real_key("eval.weight_decay", e.sgd.weight_decay, false),
      real_key("eval.grad_clip", e.sgd.grad_clip, false),
      int_key("eval.random_samples", c.random_samples, 1),
      u64_key("eval.seed", e.seed),
      string_key("output.dir", c.output_dir),
  };
}

}  // namespace

Config parse_config(const std::string& text) {
  Config c;
  const auto table = keys(c);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::string errors;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      errors += "line " + std::to_string(lineno) + ": expected 'section.key = value'\n";
      continue;
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const Key* k = nullptr;
    for (const Key& cand : table) {
      if (cand.name == key) k = &cand;
    }
    if (!k) {
      errors += "line " + std::to_string(lineno) + ": unknown key '" + key + "'\n";
      continue;
    }
    try {
      k->set(value);
    } catch (const std::exception& ex) {
      errors += "line " + std::to_string(lineno) + ": " + key + ": " + ex.what() + "\n";
    }
  }
  if (!errors.empty()) {
    errors.pop_back();
    fail(ErrorKind::kValidation, errors);
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const Config& config) {
  Config copy = config;
  std::string out;
  for (const Key& k : keys(copy)) out += k.name + " = " + k.get() + "\n";
  return out;
}

namespace {

Dataset leading(const Dataset& d, int n) {
  if (n <= 0 || n >= d.size()) return d;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return d.subset(idx);
}

Dataset read_cifar_files(const std::string& paths) {
  std::vector<unsigned char> bytes;
  for (const std::string& path : split_list(paths)) {
    if (path.empty()) continue;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::kIo, "cannot open " + path);
    bytes.insert(bytes.end(), std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (bytes.size() % 3073 != 0) {
      fail(ErrorKind::kIo, "cifar10: " + path + " is not a whole number of 3073-byte records");
    }
  }
  return decode_cifar10(bytes);
}

}  // namespace

LoadedData load_data(const DataConfig& config) {
  LoadedData out;
  if (config.kind == "toy") {
    auto [train, test] = make_toy_dataset(
        {config.image_size, config.train_size, config.test_size, config.noise, config.seed});
    out.train = std::move(train);
    out.test = std::move(test);
  } else {
    if (config.train_path.empty() || config.test_path.empty()) {
      fail(ErrorKind::kInvalidArgument, "data.kind = cifar10 needs data.train_path and data.test_path");
    }
    out.train = leading(read_cifar_files(config.train_path), config.train_size);
    out.test = leading(read_cifar_files(config.test_path), config.test_size);
  }
  if (out.train.size() < 2 || out.test.size() < 1) fail(ErrorKind::kValidation, "dataset is too small");
  out.search = leading(out.train, config.search_subset);
  return out;
}

void apply_seed(Config& config, std::uint64_t seed) {
  config.search.seed = seed;
  config.eval.seed = seed;
}

}  // namespace hdas
