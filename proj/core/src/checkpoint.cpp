#include "mmgl/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "json.hpp"

#include "mmgl/errors.hpp"

namespace mmgl {

using json = nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j, const std::string& what) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw DataError("checkpoint: matrix '" + what + "' has " + std::to_string(data.size()) +
                    " values for shape " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Matrix(rows, cols, std::move(data));
}

std::string shape_text(const DatasetShape& s) {
  std::string out = "dims [";
  for (std::size_t i = 0; i < s.modality_dims.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(s.modality_dims[i]);
  }
  return out + "], " + std::to_string(s.num_classes) + " classes";
}

}  // namespace

std::string checkpoint_to_json(const ModelState& state, const TrainConfig& cfg) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["fingerprint"] = {{"modality_dims", state.shape.modality_dims},
                      {"num_classes", state.shape.num_classes}};
  json config = json::object();
  for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
  j["config"] = config;
  j["state"] = {{"epoch", state.epoch},
                {"seed", state.seed},
                {"fusion", to_string(state.fusion)},
                {"graph_mode", to_string(state.graph_mode)},
                {"alpha", state.marl.alpha},
                {"tau", state.marl.tau},
                {"theta", state.agl.theta},
                {"beta", state.agl.beta},
                {"gamma", state.agl.gamma}};
  json params = json::object();
  for (const Parameter* p : state.all_parameters()) {
    params[p->name] = matrix_json(p->value);
  }
  j["parameters"] = params;
  const AdamState& opt = state.optimizer;
  json slots = json::object();
  for (const auto& [name, slot] : opt.slots) {
    slots[name] = {{"steps", slot.steps},
                   {"m", matrix_json(slot.first_moment)},
                   {"v", matrix_json(slot.second_moment)}};
  }
  j["adam"] = {{"step", opt.step},
               {"lr", opt.options.learning_rate},
               {"beta1", opt.options.beta1},
               {"beta2", opt.options.beta2},
               {"eps", opt.options.epsilon},
               {"slots", slots}};
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw DataError("checkpoint format_version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    Checkpoint ck;
    for (const auto& [k, v] : j.at("config").items()) {
      set_config_value(ck.config, k, v.get<std::string>());
    }
    ck.config.validate();
    DatasetShape shape;
    shape.modality_dims = j.at("fingerprint").at("modality_dims").get<std::vector<std::size_t>>();
    shape.num_classes = j.at("fingerprint").at("num_classes").get<std::size_t>();

    ModelState s = ModelState::init(shape, ck.config);
    const json& st = j.at("state");
    s.epoch = st.at("epoch").get<std::size_t>();
    s.seed = st.at("seed").get<std::uint64_t>();
    s.marl.alpha = st.at("alpha").get<double>();
    s.marl.tau = st.at("tau").get<double>();
    s.agl.theta = st.at("theta").get<double>();
    s.agl.beta = st.at("beta").get<double>();
    s.agl.gamma = st.at("gamma").get<double>();
    if (st.at("fusion").get<std::string>() != to_string(s.fusion) ||
        st.at("graph_mode").get<std::string>() != to_string(s.graph_mode)) {
      throw DataError("checkpoint state disagrees with its stored config");
    }

    const json& params = j.at("parameters");
    for (Parameter* p : s.all_parameters()) {
      if (!params.contains(p->name)) throw DataError("checkpoint lacks parameter '" + p->name + "'");
      Matrix value = matrix_from(params.at(p->name), p->name);
      if (value.rows() != p->value.rows() || value.cols() != p->value.cols()) {
        throw DataError("checkpoint parameter '" + p->name + "' has shape " + value.shape_string() +
                        ", expected " + p->value.shape_string());
      }
      p->value = std::move(value);
      p->zero_grad();
    }

    const json& adam = j.at("adam");
    s.optimizer.step = adam.at("step").get<std::uint64_t>();
    s.optimizer.options.learning_rate = adam.at("lr").get<double>();
    s.optimizer.options.beta1 = adam.at("beta1").get<double>();
    s.optimizer.options.beta2 = adam.at("beta2").get<double>();
    s.optimizer.options.epsilon = adam.at("eps").get<double>();
    std::map<std::string, const Parameter*> by_name;
    for (const Parameter* p : std::as_const(s).all_parameters()) by_name.emplace(p->name, p);
    for (const auto& [name, slot] : adam.at("slots").items()) {
      const auto owner = by_name.find(name);
      if (owner == by_name.end()) throw DataError("checkpoint has optimizer state for unknown parameter '" + name + "'");
      AdamState::Slot sl;
      sl.steps = slot.at("steps").get<std::uint64_t>();
      sl.first_moment = matrix_from(slot.at("m"), name + ".m");
      sl.second_moment = matrix_from(slot.at("v"), name + ".v");
      const Matrix& shape = owner->second->value;
      if (sl.first_moment.rows() != shape.rows() || sl.first_moment.cols() != shape.cols() ||
          sl.second_moment.rows() != shape.rows() || sl.second_moment.cols() != shape.cols()) {
        throw DataError("checkpoint optimizer state for '" + name + "' does not match its parameter shape");
      }
      s.optimizer.slots.emplace(name, std::move(sl));
    }
    s.validate();
    ck.state = std::move(s);
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ParameterError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ModelState& state, const TrainConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(state, cfg) << '\n';
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

Checkpoint load_checkpoint(const std::string& path, const DatasetShape& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.state.shape == expected)) {
    throw DataError("checkpoint '" + path + "' was trained on " + shape_text(ck.state.shape) +
                    " but the dataset has " + shape_text(expected));
  }
  return ck;
}

}  // namespace mmgl
