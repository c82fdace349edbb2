#include "slu/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace slu {

double Rng::normal(double mean, double stddev) {
  if (have_spare_) {
    have_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return mean + stddev * r * std::cos(a);
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("categorical: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("categorical: zero total weight");
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
  os.precision(17);
  os << spare_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r(0);
  std::istringstream is(text);
  int spare_flag = 0;
  is >> r.engine_ >> spare_flag >> r.spare_;
  if (!is) throw std::runtime_error("Rng::deserialize: malformed state");
  r.have_spare_ = spare_flag != 0;
  return r;
}

bool Rng::operator==(const Rng& other) const {
  return engine_ == other.engine_ && have_spare_ == other.have_spare_ &&
         spare_ == other.spare_;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace slu
