#pragma once

#include <map>
#include <string>
#include <vector>

#include "msr/forward_model.hpp"

namespace msr::harness {

// Flat key=value option bag. Config files use [section] headers that prefix
// keys as "section.key"; CLI flags override file values.
class Options {
 public:
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_default(const std::string& key, const std::string& value) {
    kv_.emplace(key, value);
  }
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& def = "") const;
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  double get_double(const std::string& key, double def) const;
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& all() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

Options load_config_file(const std::string& path);

// Built-in test signals. "sine" is one period of sin over d samples,
// "triangle" a symmetric ramp normalized to [0,1], "random-gaussian" i.i.d.
// normals scaled to unit max-abs.
Signal make_signal(const std::string& kind, int d, std::uint64_t seed,
                   const std::string& file = "");

// Built-in PMFs; "bimodal" is a mixture of two wrapped discrete Gaussians.
Vec make_pmf(const std::string& kind, int d, std::uint64_t seed, const Options& opts);

int cmd_generate(const Options& opts);
int cmd_solve(const Options& opts);
int cmd_sweep(const Options& opts);
int cmd_eval(const Options& opts);

}  // namespace msr::harness
