#include "weft/config.hpp"

#include <fstream>
#include <sstream>

namespace weft {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

i64 to_i64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    i64 r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_f64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& v) {
  if (key == "seed") seed = static_cast<u64>(to_i64(key, v));
  else if (key == "steps") steps = to_i64(key, v);
  else if (key == "batch") batch = to_i64(key, v);
  else if (key == "train_count") train_count = to_i64(key, v);
  else if (key == "eval_count") eval_count = to_i64(key, v);
  else if (key == "eval_every") eval_every = to_i64(key, v);
  else if (key == "bench_steps") bench_steps = to_i64(key, v);
  else if (key == "threads") threads = static_cast<int>(to_i64(key, v));
  else if (key == "regime") regime = v;
  else if (key == "out_dir") out_dir = v;
  else if (key == "export_data") export_data = v;
  else if (key == "image_size") model.image_size = to_i64(key, v);
  else if (key == "channels") model.channels = to_i64(key, v);
  else if (key == "frozen_dim") model.frozen_dim = to_i64(key, v);
  else if (key == "k_experts") model.k_experts = to_i64(key, v);
  else if (key == "subspaces") model.subspaces = to_i64(key, v);
  else if (key == "rho") model.rho = to_f64(key, v);
  else if (key == "lambda") model.lambda = to_f64(key, v);
  else if (key == "points") model.points = to_i64(key, v);
  else if (key == "decoder_width") model.decoder_width = to_i64(key, v);
  else if (key == "frozen_mlp_hidden") model.frozen_mlp_hidden = to_i64(key, v);
  else if (key == "frozen_blocks") model.frozen_blocks = static_cast<int>(to_i64(key, v));
  else if (key == "frozen_heads") model.frozen_heads = static_cast<int>(to_i64(key, v));
  else if (key == "lr") optim.lr = to_f64(key, v);
  else if (key == "weight_decay") optim.weight_decay = to_f64(key, v);
  else if (key == "beta") loss.beta = to_f64(key, v);
  else if (key == "gamma") loss.gamma = to_f64(key, v);
  else if (key == "dice_smooth") loss.smooth = to_f64(key, v);
  else fail("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      fail("config: " + path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return cfg;
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << "\n"
     << "steps = " << steps << "\n"
     << "batch = " << batch << "\n"
     << "train_count = " << train_count << "\n"
     << "eval_count = " << eval_count << "\n"
     << "eval_every = " << eval_every << "\n"
     << "bench_steps = " << bench_steps << "\n"
     << "threads = " << threads << "\n"
     << "regime = " << regime << "\n"
     << "out_dir = " << out_dir << "\n"
     << "export_data = " << export_data << "\n"
     << "image_size = " << model.image_size << "\n"
     << "channels = " << model.channels << "\n"
     << "frozen_dim = " << model.frozen_dim << "\n"
     << "k_experts = " << model.k_experts << "\n"
     << "subspaces = " << model.subspaces << "\n"
     << "rho = " << model.rho << "\n"
     << "lambda = " << model.lambda << "\n"
     << "points = " << model.points << "\n"
     << "decoder_width = " << model.decoder_width << "\n"
     << "frozen_mlp_hidden = " << model.frozen_mlp_hidden << "\n"
     << "frozen_blocks = " << model.frozen_blocks << "\n"
     << "frozen_heads = " << model.frozen_heads << "\n"
     << "lr = " << optim.lr << "\n"
     << "weight_decay = " << optim.weight_decay << "\n"
     << "beta = " << loss.beta << "\n"
     << "gamma = " << loss.gamma << "\n"
     << "dice_smooth = " << loss.smooth << "\n";
  return os.str();
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch = batch;
  tc.seed = seed;
  tc.eval_every = eval_every;
  tc.optim = optim;
  tc.loss = loss;
  tc.out_dir = out_dir;
  return tc;
}

}  // namespace weft
