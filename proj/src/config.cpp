#include "cdcl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace cdcl::config {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + " (expected " +
                    expected + ")");
}

template <typename I>
I parse_int(std::string_view key, std::string_view v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<double> parse_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto item = trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    out.push_back(parse_double(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> put;
};

template <typename Access>
Field int_of(const char* key, Access access) {
  return {key, [access](const RunConfig& c) { return std::to_string(access(c)); },
          [access](RunConfig& c, std::string_view k, std::string_view v) { access(c) = parse_int<int>(k, v); }};
}

template <typename Access>
Field double_of(const char* key, Access access) {
  return {key, [access](const RunConfig& c) { return format_double(access(c)); },
          [access](RunConfig& c, std::string_view k, std::string_view v) { access(c) = parse_double(k, v); }};
}

template <typename Access>
Field bool_of(const char* key, Access access) {
  return {key, [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); },
          [access](RunConfig& c, std::string_view k, std::string_view v) { access(c) = parse_bool(k, v); }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
                 [](RunConfig& c, std::string_view k, std::string_view v) { c.train.seed = parse_int<std::uint64_t>(k, v); }});
    f.push_back({"scale", [](const RunConfig& c) { return std::to_string(c.train.scale); },
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   c.train.scale = c.model.sr.scale = parse_int<int>(k, v);
                 }});
    f.push_back(int_of("model.channels", [](auto& c) -> auto& { return c.model.sr.channels; }));
    f.push_back(int_of("model.n_dags", [](auto& c) -> auto& { return c.model.sr.n_dags; }));
    f.push_back(int_of("model.n_dadaus", [](auto& c) -> auto& { return c.model.sr.n_dadaus; }));
    f.push_back(bool_of("model.spatial_branch", [](auto& c) -> auto& { return c.model.sr.spatial_branch; }));
    f.push_back(bool_of("model.channel_branch", [](auto& c) -> auto& { return c.model.sr.channel_branch; }));
    f.push_back(bool_of("model.fc_shared", [](auto& c) -> auto& { return c.model.sr.fc_shared; }));
    f.push_back(bool_of("model.channel_uses_lr", [](auto& c) -> auto& { return c.model.sr.channel_uses_lr; }));
    f.push_back(bool_of("model.spatial_uses_lr", [](auto& c) -> auto& { return c.model.sr.spatial_uses_lr; }));
    f.push_back(bool_of("model.sigmoid_over_sum", [](auto& c) -> auto& { return c.model.sr.sigmoid_over_sum; }));
    f.push_back(bool_of("model.convnext_residual", [](auto& c) -> auto& { return c.model.sr.convnext_residual; }));
    f.push_back(int_of("estimator.width_divisor", [](auto& c) -> auto& { return c.model.estimator.width_divisor; }));
    f.push_back(int_of("contrastive.divide", [](auto& c) -> auto& { return c.model.contrastive.divide; }));
    f.push_back(double_of("contrastive.tau", [](auto& c) -> auto& { return c.model.contrastive.tau; }));
    f.push_back(double_of("contrastive.alpha", [](auto& c) -> auto& { return c.model.contrastive.alpha; }));
    f.push_back(int_of("train.batch", [](auto& c) -> auto& { return c.train.batch; }));
    f.push_back(int_of("train.views", [](auto& c) -> auto& { return c.train.views; }));
    f.push_back(int_of("train.patch", [](auto& c) -> auto& { return c.train.patch; }));
    f.push_back(int_of("train.steps_per_epoch", [](auto& c) -> auto& { return c.train.steps_per_epoch; }));
    f.push_back(int_of("train.pretrain_epochs", [](auto& c) -> auto& { return c.train.pretrain_epochs; }));
    f.push_back(int_of("train.pretrain_drop_epoch", [](auto& c) -> auto& { return c.train.pretrain_drop_epoch; }));
    f.push_back(double_of("train.pretrain_lr", [](auto& c) -> auto& { return c.train.pretrain_lr; }));
    f.push_back(double_of("train.pretrain_lr_dropped", [](auto& c) -> auto& { return c.train.pretrain_lr_dropped; }));
    f.push_back(int_of("train.joint_epochs", [](auto& c) -> auto& { return c.train.joint_epochs; }));
    f.push_back(double_of("train.joint_lr", [](auto& c) -> auto& { return c.train.joint_lr; }));
    f.push_back(double_of("train.joint_lr_end", [](auto& c) -> auto& { return c.train.joint_lr_end; }));
    f.push_back(bool_of("train.augment", [](auto& c) -> auto& { return c.train.augment; }));
    f.push_back(double_of("optim.beta1", [](auto& c) -> auto& { return c.train.adam.beta1; }));
    f.push_back(double_of("optim.beta2", [](auto& c) -> auto& { return c.train.adam.beta2; }));
    f.push_back(double_of("optim.eps", [](auto& c) -> auto& { return c.train.adam.eps; }));
    f.push_back(double_of("optim.weight_decay", [](auto& c) -> auto& { return c.train.adam.weight_decay; }));
    f.push_back(int_of("degradation.setting", [](auto& c) -> auto& { return c.train.setting.preset; }));
    f.push_back({"degradation.iso_widths",
                 [](const RunConfig& c) {
                   std::string out;
                   for (const double w : c.train.setting.iso_widths) out += (out.empty() ? "" : ",") + format_double(w);
                   return out;
                 },
                 [](RunConfig& c, std::string_view k, std::string_view v) { c.train.setting.iso_widths = parse_list(k, v); }});
    f.push_back(int_of("degradation.kernel_size", [](auto& c) -> auto& { return c.train.setting.kernel_size; }));
    f.push_back({"degradation.downsampler",
                 [](const RunConfig& c) {
                   return std::string(c.train.setting.downsampler == degradation::Downsampler::Bicubic ? "bicubic" : "decimate");
                 },
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   if (v == "bicubic") {
                     c.train.setting.downsampler = degradation::Downsampler::Bicubic;
                   } else if (v == "decimate") {
                     c.train.setting.downsampler = degradation::Downsampler::Decimate;
                   } else {
                     bad_value(k, v, "bicubic or decimate");
                   }
                 }});
    return f;
  }();
  return fields;
}

}  // namespace

void set(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : schema()) {
    if (key == f.key) {
      f.put(cfg, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
      }
      try {
        set(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return base;
}

RunConfig load_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<std::pair<std::string, std::string>> entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : schema()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : entries(cfg)) j[k] = v;
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config snapshot is not an object");
  RunConfig cfg;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw FormatError("config value for " + k + " is not a string");
    set(cfg, k, v.get<std::string>());
  }
  return cfg;
}

void validate(const RunConfig& cfg) {
  cfg.model.validate();
  cfg.train.validate(cfg.model);
}

}  // namespace cdcl::config
