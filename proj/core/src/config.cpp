#include "mmgl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mmgl/errors.hpp"

namespace mmgl {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ParameterError("config key '" + std::string(key) + "': cannot parse '" +
                       std::string(value) + "' as " + expected);
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a count");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad_value(key, value, "a boolean");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string to_string(FusionMode mode) { return mode == FusionMode::kMarl ? "marl" : "concat"; }
std::string to_string(GraphMode mode) { return mode == GraphMode::kLearned ? "learned" : "knn"; }
std::string to_string(InferenceMode mode) {
  return mode == InferenceMode::kInductive ? "inductive" : "transductive";
}
std::string to_string(SamplingMode mode) { return mode == SamplingMode::kFull ? "full" : "random"; }

InferenceMode parse_inference_mode(std::string_view text) {
  if (text == "inductive") return InferenceMode::kInductive;
  if (text == "transductive") return InferenceMode::kTransductive;
  throw ParameterError("mode must be 'inductive' or 'transductive', got '" + std::string(text) +
                       "'");
}

void TrainConfig::validate() const {
  if (d_f == 0 || d_h == 0 || d_g == 0) throw ParameterError("d_f, d_h and d_g must be >= 1");
  if (!(alpha >= 0.0)) throw ParameterError("alpha must be >= 0");
  if (!(tau >= 0.0)) throw ParameterError("tau must be > 0 (or 0 for the default)");
  if (!(theta > 0.0 && theta < 1.0)) throw ParameterError("theta must lie in (0, 1)");
  if (!(beta >= 0.0) || !(gamma >= 0.0)) throw ParameterError("beta and gamma must be >= 0");
  if (!(lambda >= 0.0) || !(eta >= 0.0)) throw ParameterError("lambda and eta must be >= 0");
  if (!(lr > 0.0)) throw ParameterError("lr must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be > 0");
  if (eval_every == 0) throw ParameterError("eval_every must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ParameterError("val_fraction must lie in [0, 1)");
  }
  if (knn_k == 0) throw ParameterError("knn_k must be >= 1");
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "d_f") cfg.d_f = parse_count(key, value);
  else if (key == "d_h") cfg.d_h = parse_count(key, value);
  else if (key == "d_g") cfg.d_g = parse_count(key, value);
  else if (key == "d_A") cfg.d_A = parse_count(key, value);
  else if (key == "alpha") cfg.alpha = parse_real(key, value);
  else if (key == "tau") cfg.tau = parse_real(key, value);
  else if (key == "theta") cfg.theta = parse_real(key, value);
  else if (key == "beta") cfg.beta = parse_real(key, value);
  else if (key == "gamma") cfg.gamma = parse_real(key, value);
  else if (key == "lambda") cfg.lambda = parse_real(key, value);
  else if (key == "eta") cfg.eta = parse_real(key, value);
  else if (key == "lr") cfg.lr = parse_real(key, value);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_real(key, value);
  else if (key == "epochs") cfg.epochs = parse_count(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_count(key, value);
  else if (key == "fanout1") cfg.fanouts[0] = parse_count(key, value);
  else if (key == "fanout2") cfg.fanouts[1] = parse_count(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_count(key, value);
  else if (key == "val_fraction") cfg.val_fraction = parse_real(key, value);
  else if (key == "marl_bias") cfg.marl_bias = parse_bool(key, value);
  else if (key == "knn_k") cfg.knn_k = parse_count(key, value);
  else if (key == "fusion") {
    if (value == "marl") cfg.fusion = FusionMode::kMarl;
    else if (value == "concat") cfg.fusion = FusionMode::kConcat;
    else bad_value(key, value, "'marl' or 'concat'");
  } else if (key == "graph_mode") {
    if (value == "learned") cfg.graph_mode = GraphMode::kLearned;
    else if (value == "knn") cfg.graph_mode = GraphMode::kKnn;
    else bad_value(key, value, "'learned' or 'knn'");
  } else if (key == "eval_sampling") {
    if (value == "full") cfg.eval_sampling = SamplingMode::kFull;
    else if (value == "random") cfg.eval_sampling = SamplingMode::kRandom;
    else bad_value(key, value, "'full' or 'random'");
  } else {
    throw ParameterError("unknown config key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"d_f", n(cfg.d_f)},
      {"d_h", n(cfg.d_h)},
      {"d_g", n(cfg.d_g)},
      {"d_A", n(cfg.d_A)},
      {"alpha", format_double(cfg.alpha)},
      {"tau", format_double(cfg.tau)},
      {"theta", format_double(cfg.theta)},
      {"beta", format_double(cfg.beta)},
      {"gamma", format_double(cfg.gamma)},
      {"lambda", format_double(cfg.lambda)},
      {"eta", format_double(cfg.eta)},
      {"lr", format_double(cfg.lr)},
      {"adam_beta1", format_double(cfg.adam_beta1)},
      {"adam_beta2", format_double(cfg.adam_beta2)},
      {"adam_eps", format_double(cfg.adam_eps)},
      {"epochs", n(cfg.epochs)},
      {"batch_size", n(cfg.batch_size)},
      {"fanout1", n(cfg.fanouts[0])},
      {"fanout2", n(cfg.fanouts[1])},
      {"seed", std::to_string(cfg.seed)},
      {"eval_every", n(cfg.eval_every)},
      {"val_fraction", format_double(cfg.val_fraction)},
      {"marl_bias", cfg.marl_bias ? "true" : "false"},
      {"fusion", to_string(cfg.fusion)},
      {"graph_mode", to_string(cfg.graph_mode)},
      {"knn_k", n(cfg.knn_k)},
      {"eval_sampling", to_string(cfg.eval_sampling)},
  };
}

TrainConfig parse_config(std::string_view text, TrainConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ParameterError& e) {
      throw ParameterError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

}  // namespace mmgl
