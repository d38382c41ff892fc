#include "kehnn/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace kehnn {

using nlohmann::json;

std::size_t TrainConfig::channel_count() const {
  std::size_t n = 0;
  for (bool on : channels) n += on;
  return n;
}

std::size_t TrainConfig::feature_dim() const {
  const std::size_t conv_rows = max_len - conv_window[0] + 1;
  const std::size_t conv_cols = max_len - conv_window[1] + 1;
  return feature_maps * pooled_extent(conv_rows, pool_window[0], pool_stride[0]) *
         pooled_extent(conv_cols, pool_window[1], pool_stride[1]);
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  if (!d || !m || !max_len || !batch_size || !hidden || !feature_maps) {
    fail("d, m, max_len, batch_size, hidden and feature_maps must be positive");
  }
  if (C < 2) fail("C must be at least 2");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(init_scale > 0.0)) fail("init_scale must be positive");
  if (grad_clip < 0.0) fail("grad_clip must be nonnegative");
  if (!max_epochs) fail("max_epochs must be positive");
  if (!channel_count()) fail("at least one channel must be enabled");
  for (std::size_t i = 0; i < 2; ++i) {
    if (!conv_window[i] || !pool_window[i] || !pool_stride[i]) {
      fail("windows and strides must be positive");
    }
  }
  if (conv_window[0] > max_len || conv_window[1] > max_len) {
    fail("conv_window exceeds max_len " + std::to_string(max_len));
  }
  if (pool_window[0] > max_len - conv_window[0] + 1 ||
      pool_window[1] > max_len - conv_window[1] + 1) {
    fail("pool_window exceeds the convolution output");
  }
  if (task == Task::kRanking && group_size < 2) {
    fail("group_size must be at least 2 for ranking");
  }
}

namespace {

json channels_json(const std::array<bool, 3>& channels) {
  json out = json::array();
  for (int i = 0; i < 3; ++i)
    if (channels[i]) out.push_back(i + 1);
  return out;
}

std::array<bool, 3> channels_from(const json& j) {
  std::array<bool, 3> out{false, false, false};
  for (const auto& v : j) {
    int c = v.get<int>();
    if (c < 1 || c > 3) {
      throw std::invalid_argument("config: channel ids must be 1, 2 or 3");
    }
    out[c - 1] = true;
  }
  return out;
}

}  // namespace

std::string to_json(const TrainConfig& c) {
  json j = {
      {"d", c.d},
      {"m", c.m},
      {"max_len", c.max_len},
      {"C", c.C},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"dropout", c.dropout},
      {"activation", std::string(activation_name(c.activation))},
      {"freeze_embeddings", c.freeze_embeddings},
      {"freeze_knowledge", c.freeze_knowledge},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"seed", c.seed},
      {"hidden", c.hidden},
      {"feature_maps", c.feature_maps},
      {"conv_window", c.conv_window},
      {"pool_window", c.pool_window},
      {"pool_stride", c.pool_stride},
      {"channels", channels_json(c.channels)},
      {"task", c.task == Task::kRanking ? "ranking" : "classification"},
      {"group_size", c.group_size},
      {"grad_clip", c.grad_clip},
      {"init_scale", c.init_scale},
  };
  return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: expected an object");

  TrainConfig c;
  bool pool_stride_set = false;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "d") c.d = v.get<std::size_t>();
      else if (key == "m") c.m = v.get<std::size_t>();
      else if (key == "max_len") c.max_len = v.get<std::size_t>();
      else if (key == "C") c.C = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "dropout") c.dropout = v.get<double>();
      else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
      else if (key == "freeze_embeddings") c.freeze_embeddings = v.get<bool>();
      else if (key == "freeze_knowledge") c.freeze_knowledge = v.get<bool>();
      else if (key == "max_epochs") c.max_epochs = v.get<std::size_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "hidden") c.hidden = v.get<std::size_t>();
      else if (key == "feature_maps") c.feature_maps = v.get<std::size_t>();
      else if (key == "conv_window") c.conv_window = v.get<std::array<std::size_t, 2>>();
      else if (key == "pool_window") c.pool_window = v.get<std::array<std::size_t, 2>>();
      else if (key == "pool_stride") {
        c.pool_stride = v.get<std::array<std::size_t, 2>>();
        pool_stride_set = true;
      }
      else if (key == "channels") c.channels = channels_from(v);
      else if (key == "task") {
        auto t = v.get<std::string>();
        if (t == "classification") c.task = Task::kClassification;
        else if (t == "ranking") c.task = Task::kRanking;
        else throw std::invalid_argument("config: unknown task '" + t + "'");
      }
      else if (key == "group_size") c.group_size = v.get<std::size_t>();
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else if (key == "init_scale") c.init_scale = v.get<double>();
      else throw std::invalid_argument("config: unknown field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!pool_stride_set) c.pool_stride = c.pool_window;
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

void apply_env_overrides(TrainConfig& config) {
  if (const char* s = std::getenv("KEHNN_SEED"); s && *s) {
    config.seed = std::stoull(s);
  }
}

std::size_t worker_threads() {
  if (const char* s = std::getenv("KEHNN_THREADS"); s && *s) {
    const unsigned long n = std::stoul(s);
    return n ? n : 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

}  // namespace kehnn
