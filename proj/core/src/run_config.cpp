#include "msan/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "msan/errors.hpp"

namespace msan::io {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, long line, const char* expected) {
  throw ConfigError("config line " + std::to_string(line) + ": key '" + key + "' expects " + expected + ", got '" +
                    value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, long line, const char* expected) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) bad_value(key, value, line, expected);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value, long line) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, line, "true or false");
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&, long)>;

const std::map<std::string, Setter>& setters() {
  auto int_field = [](auto member_ptr) -> Setter {
    return [member_ptr](RunConfig& c, const std::string& k, const std::string& v, long l) {
      std::invoke(member_ptr, c) = parse_number<int>(k, v, l, "an integer");
    };
  };
  auto real_field = [](auto member_ptr) -> Setter {
    return [member_ptr](RunConfig& c, const std::string& k, const std::string& v, long l) {
      std::invoke(member_ptr, c) = parse_number<double>(k, v, l, "a real number");
    };
  };
  static const std::map<std::string, Setter> table{
      {"mode", [](RunConfig& c, const std::string&, const std::string& v, long l) {
         try {
           c.train.mode = train::parse_mode(v);
         } catch (const ConfigError& e) {
           throw ConfigError("config line " + std::to_string(l) + ": key 'mode': " + e.what());
         }
       }},
      {"lr", real_field([](RunConfig& c) -> double& { return c.train.lr; })},
      {"epochs", int_field([](RunConfig& c) -> int& { return c.train.epochs; })},
      {"batch_source", int_field([](RunConfig& c) -> int& { return c.train.batch_source; })},
      {"batch_target", int_field([](RunConfig& c) -> int& { return c.train.batch_target; })},
      {"q", real_field([](RunConfig& c) -> double& { return c.train.q; })},
      {"subdomain_warmup_epochs", int_field([](RunConfig& c) -> int& { return c.train.subdomain_warmup_epochs; })},
      {"pseudo_refresh_every", int_field([](RunConfig& c) -> int& { return c.train.pseudo_refresh_every; })},
      {"grl_lambda", real_field([](RunConfig& c) -> double& { return c.train.grl_lambda; })},
      {"grl_ramp", [](RunConfig& c, const std::string& k, const std::string& v, long l) {
         c.train.grl_ramp = parse_bool(k, v, l);
       }},
      {"ae_pretrain_epochs", int_field([](RunConfig& c) -> int& { return c.train.ae_pretrain_epochs; })},
      {"optimizer", [](RunConfig& c, const std::string&, const std::string& v, long l) {
         try {
           c.train.optimizer = optim::parse_kind(v);
         } catch (const ConfigError& e) {
           throw ConfigError("config line " + std::to_string(l) + ": key 'optimizer': " + e.what());
         }
       }},
      {"ae_optimizer", [](RunConfig& c, const std::string&, const std::string& v, long l) {
         try {
           c.train.ae_optimizer = optim::parse_kind(v);
         } catch (const ConfigError& e) {
           throw ConfigError("config line " + std::to_string(l) + ": key 'ae_optimizer': " + e.what());
         }
       }},
      {"ae_lr", [](RunConfig& c, const std::string& k, const std::string& v, long l) {
         c.train.ae_lr = parse_number<double>(k, v, l, "a real number");
       }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v, long l) {
         c.set_seed(parse_number<std::uint64_t>(k, v, l, "a non-negative integer"));
       }},
      {"num_subjects", int_field([](RunConfig& c) -> int& { return c.synth.num_subjects; })},
      {"num_classes", int_field([](RunConfig& c) -> int& { return c.synth.num_classes; })},
      {"samples_per_class", int_field([](RunConfig& c) -> int& { return c.synth.samples_per_class; })},
      {"feature_dims", [](RunConfig& c, const std::string& k, const std::string& v, long l) {
         std::array<std::size_t, 3> dims{};
         std::istringstream in(v);
         std::string part;
         std::size_t n = 0;
         while (std::getline(in, part, ',')) {
           if (n == 3) bad_value(k, v, l, "three comma-separated positive integers");
           dims[n++] = parse_number<std::size_t>(k, trim(part), l, "three comma-separated positive integers");
         }
         if (n != 3) bad_value(k, v, l, "three comma-separated positive integers");
         c.synth.feature_dims = dims;
       }},
      {"class_separation", real_field([](RunConfig& c) -> double& { return c.synth.class_separation; })},
      {"subject_shift", real_field([](RunConfig& c) -> double& { return c.synth.subject_shift; })},
      {"noise_sigma", real_field([](RunConfig& c) -> double& { return c.synth.noise_sigma; })},
      {"target_subject", int_field([](RunConfig& c) -> int& { return c.target_subject; })},
      {"rate_hz", [](RunConfig& c, const std::string& k, const std::string& v, long l) {
         c.rate_hz = parse_number<double>(k, v, l, "a real number");
       }},
      {"window_s", real_field([](RunConfig& c) -> double& { return c.window_s; })},
      {"stride_s", real_field([](RunConfig& c) -> double& { return c.stride_s; })},
      {"raw_channels", int_field([](RunConfig& c) -> int& { return c.raw_channels; })},
      {"raw_duration_s", real_field([](RunConfig& c) -> double& { return c.raw_duration_s; })},
      {"raw_class", int_field([](RunConfig& c) -> int& { return c.raw_class; })},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' given twice");
    }
    if (value.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' has no value");
    it->second(cfg, key, value, line_no);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os << "mode = " << train::mode_name(c.train.mode) << '\n'
     << "lr = " << fmt_double(c.train.lr) << '\n'
     << "epochs = " << c.train.epochs << '\n'
     << "batch_source = " << c.train.batch_source << '\n'
     << "batch_target = " << c.train.batch_target << '\n'
     << "q = " << fmt_double(c.train.q) << '\n'
     << "subdomain_warmup_epochs = " << c.train.subdomain_warmup_epochs << '\n'
     << "pseudo_refresh_every = " << c.train.pseudo_refresh_every << '\n'
     << "grl_lambda = " << fmt_double(c.train.grl_lambda) << '\n'
     << "grl_ramp = " << (c.train.grl_ramp ? "true" : "false") << '\n'
     << "ae_pretrain_epochs = " << c.train.ae_pretrain_epochs << '\n'
     << "optimizer = " << optim::kind_name(c.train.optimizer) << '\n';
  if (c.train.ae_optimizer) os << "ae_optimizer = " << optim::kind_name(*c.train.ae_optimizer) << '\n';
  if (c.train.ae_lr) os << "ae_lr = " << fmt_double(*c.train.ae_lr) << '\n';
  os << "seed = " << c.train.seed << '\n'
     << "num_subjects = " << c.synth.num_subjects << '\n'
     << "num_classes = " << c.synth.num_classes << '\n'
     << "samples_per_class = " << c.synth.samples_per_class << '\n'
     << "feature_dims = " << c.synth.feature_dims[0] << ',' << c.synth.feature_dims[1] << ','
     << c.synth.feature_dims[2] << '\n'
     << "class_separation = " << fmt_double(c.synth.class_separation) << '\n'
     << "subject_shift = " << fmt_double(c.synth.subject_shift) << '\n'
     << "noise_sigma = " << fmt_double(c.synth.noise_sigma) << '\n'
     << "target_subject = " << c.target_subject << '\n';
  if (c.rate_hz) os << "rate_hz = " << fmt_double(*c.rate_hz) << '\n';
  os << "window_s = " << fmt_double(c.window_s) << '\n'
     << "stride_s = " << fmt_double(c.stride_s) << '\n'
     << "raw_channels = " << c.raw_channels << '\n'
     << "raw_duration_s = " << fmt_double(c.raw_duration_s) << '\n'
     << "raw_class = " << c.raw_class << '\n';
  return os.str();
}

}  // namespace msan::io
