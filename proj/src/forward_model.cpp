#include "msr/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "msr/io.hpp"

namespace msr {

SegmentPmf SegmentPmf::from_probs(const Vec& probs) {
  Vec logits(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0))
      throw std::invalid_argument("SegmentPmf::from_probs: probabilities must be positive");
    logits[i] = std::log(probs[i]);
  }
  return SegmentPmf(std::move(logits));
}

Vec SegmentPmf::probs() const {
  Vec p(logits.size());
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

Vec SegmentPmf::log_probs() const {
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  double lse = mx + std::log(z);
  Vec lp(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - lse;
  return lp;
}

Vec mask(const Signal& x, int s, int m) {
  const int d = x.d();
  if (s < 0 || s >= d) throw std::invalid_argument("mask: s out of range");
  if (m < 1 || m > d) throw std::invalid_argument("mask: m out of range");
  Vec out(m);
  for (int n = 0; n < m; ++n) out[n] = x.values[(n + s) % d];
  return out;
}

Vec mask_adjoint(std::span<const double> y, int s, int d) {
  const int m = static_cast<int>(y.size());
  if (s < 0 || s >= d) throw std::invalid_argument("mask_adjoint: s out of range");
  if (m < 1 || m > d) throw std::invalid_argument("mask_adjoint: m out of range");
  Vec out(d, 0.0);
  for (int n = 0; n < m; ++n) out[(n + s) % d] = y[n];
  return out;
}

int sample_location(const SegmentPmf& p, Rng& rng) {
  const Vec lp = p.log_probs();
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < p.d(); ++s) {
    double u = std::clamp(rng.uniform01(), 1e-12, 1.0 - 1e-12);
    double g = -std::log(-std::log(u));
    double v = g + lp[s];
    if (v > best_v) {
      best_v = v;
      best = s;
    }
  }
  return best;
}

double clean_variance(const Signal& x, const SegmentPmf& p, int m) {
  const int d = x.d();
  if (m < 1 || m > d) throw std::invalid_argument("clean_variance: m out of range");
  const Vec probs = p.probs();
  // Entry weight is p[s]/m for each (s, n); first and second moments of the
  // entry distribution give the pooled variance.
  double mu = 0.0, second = 0.0;
  for (int s = 0; s < d; ++s) {
    const double w = probs[s] / m;
    for (int n = 0; n < m; ++n) {
      const double v = x.values[(n + s) % d];
      mu += w * v;
      second += w * v * v;
    }
  }
  return second - mu * mu;
}

double sigma_from_snr(const Signal& x, const SegmentPmf& p, int m, double snr) {
  if (std::isinf(snr) && snr > 0) return 0.0;
  if (!(snr > 0)) throw std::invalid_argument("sigma_from_snr: snr must be positive");
  return std::sqrt(clean_variance(x, p, m) / snr);
}

MeasurementSet synthesize(const Signal& x, const SegmentPmf& p, int m,
                          double sigma, int N, std::uint64_t seed) {
  if (N < 1) throw std::invalid_argument("synthesize: N must be >= 1");
  if (sigma < 0) throw std::invalid_argument("synthesize: sigma must be >= 0");
  MeasurementSet ms;
  ms.d = x.d();
  ms.sigma = sigma;
  ms.seed = seed;
  ms.data = Mat(N, m);
  Rng loc_rng = Rng::stream(seed, "locations");
  Rng noise_rng = Rng::stream(seed, "noise");
  std::vector<int> locs(N);
  for (int j = 0; j < N; ++j) {
    const int s = sample_location(p, loc_rng);
    locs[j] = s;
    double* row = ms.data.row(j);
    for (int n = 0; n < m; ++n) row[n] = x.values[(n + s) % ms.d];
    if (sigma > 0)
      for (int n = 0; n < m; ++n) row[n] += sigma * noise_rng.normal();
  }
  ms.set_true_locations(std::move(locs));
  return ms;
}

void write_measurements(const std::string& path, const MeasurementSet& ms) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_measurements: cannot open " + path);
  f << "# d=" << ms.d << "\n";
  f << "# m=" << ms.m() << "\n";
  f << "# N=" << ms.n() << "\n";
  f << "# sigma=" << io::format_double(ms.sigma) << "\n";
  f << "# seed=" << ms.seed << "\n";
  f << "# snr=" << io::format_double(ms.snr) << "\n";
  for (int j = 0; j < ms.n(); ++j) f << io::format_row(ms.data.row(j), ms.m()) << "\n";
  if (ms.has_true_locations()) {
    std::ofstream g(path + ".loc");
    for (int s : ms.diagnostic_true_locations()) g << s << "\n";
  }
}

MeasurementSet read_measurements(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_measurements: cannot open " + path);
  MeasurementSet ms;
  int N = -1, m = -1;
  std::string line;
  std::vector<Vec> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(std::remove(key.begin(), key.end(), ' '), key.end());
      std::string val = line.substr(eq + 1);
      if (key == "d") ms.d = std::stoi(val);
      else if (key == "m") m = std::stoi(val);
      else if (key == "N") N = std::stoi(val);
      else if (key == "sigma") ms.sigma = std::stod(val);
      else if (key == "seed") ms.seed = std::stoull(val);
      else if (key == "snr") ms.snr = io::parse_double(val);
      continue;
    }
    rows.push_back(io::parse_row(line));
  }
  if (rows.empty()) throw std::runtime_error("read_measurements: no data rows in " + path);
  if (m < 0) m = static_cast<int>(rows[0].size());
  if (N >= 0 && N != static_cast<int>(rows.size()))
    throw std::runtime_error("read_measurements: row count does not match N header");
  ms.data = Mat(static_cast<int>(rows.size()), m);
  for (size_t j = 0; j < rows.size(); ++j) {
    if (static_cast<int>(rows[j].size()) != m)
      throw std::runtime_error("read_measurements: ragged row");
    std::copy(rows[j].begin(), rows[j].end(), ms.data.row(static_cast<int>(j)));
  }
  std::ifstream g(path + ".loc");
  if (g) {
    std::vector<int> locs;
    int s;
    while (g >> s) locs.push_back(s);
    if (static_cast<int>(locs.size()) == ms.n()) ms.set_true_locations(std::move(locs));
  }
  return ms;
}

}  // namespace msr
