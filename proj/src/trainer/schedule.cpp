#include "mcm/trainer/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mcm::trainer {

namespace {

std::vector<double> numbers_after(const std::string& text, std::size_t colon) {
  std::vector<double> xs;
  std::stringstream in(text.substr(colon + 1));
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != tok.size()) throw std::invalid_argument("bad number '" + tok + "' in schedule '" + text + "'");
    xs.push_back(x);
  }
  return xs;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

Schedule Schedule::constant() { return {}; }

Schedule Schedule::robbins_monro(double warmup, double gamma, double a, double b) {
  Schedule s;
  s.kind = Kind::RobbinsMonro;
  s.warmup = warmup;
  s.gamma = gamma;
  s.a = a;
  s.b = b;
  return s;
}

Schedule Schedule::cyclical(int cycles) {
  Schedule s;
  s.kind = Kind::Cyclical;
  s.cycles = cycles;
  return s;
}

Schedule Schedule::step(double gamma, int period) {
  Schedule s;
  s.kind = Kind::Step;
  s.gamma = gamma;
  s.period = period;
  return s;
}

Schedule Schedule::from_id(int id) {
  switch (id) {
    case 0: return constant();
    case 1: return robbins_monro(1500, 0.5, 1.0, 150);
    case 2: return robbins_monro(1500, 0.6, 1.0, 300);
    case 3: return robbins_monro(1500, 0.8, 1.0, 900);
    case 4: return cyclical(1);
    case 5: return cyclical(2);
    case 6: return cyclical(4);
    case 7: return step(0.8, 1500);
    case 8: return step(0.45, 3750);
    case 9: return step(0.1, 7500);
    default: throw std::invalid_argument("scheduler id must be in 0..9, got " + std::to_string(id));
  }
}

Schedule Schedule::parse(const std::string& text) {
  if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) return from_id(std::stoi(text));
  Schedule s;
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  if (name == "constant" && colon == std::string::npos) {
    s = constant();
  } else if (name == "rm" && colon != std::string::npos) {
    const auto xs = numbers_after(text, colon);
    if (xs.size() != 4) throw std::invalid_argument("rm schedule needs warmup,gamma,a,b");
    s = robbins_monro(xs[0], xs[1], xs[2], xs[3]);
  } else if (name == "cyclical" && colon != std::string::npos) {
    const auto xs = numbers_after(text, colon);
    if (xs.size() != 1 || xs[0] != std::floor(xs[0])) throw std::invalid_argument("cyclical schedule needs an integer cycle count");
    s = cyclical(static_cast<int>(xs[0]));
  } else if (name == "step" && colon != std::string::npos) {
    const auto xs = numbers_after(text, colon);
    if (xs.size() != 2 || xs[1] != std::floor(xs[1])) throw std::invalid_argument("step schedule needs gamma,period");
    s = step(xs[0], static_cast<int>(xs[1]));
  } else {
    throw std::invalid_argument("unknown schedule '" + text + "'");
  }
  s.validate();
  return s;
}

std::string Schedule::to_string() const {
  switch (kind) {
    case Kind::Constant: return "constant";
    case Kind::RobbinsMonro: return "rm:" + fmt(warmup) + "," + fmt(gamma) + "," + fmt(a) + "," + fmt(b);
    case Kind::Cyclical: return "cyclical:" + std::to_string(cycles);
    case Kind::Step: return "step:" + fmt(gamma) + "," + std::to_string(period);
  }
  return "constant";
}

void Schedule::validate() const {
  switch (kind) {
    case Kind::Constant: return;
    case Kind::RobbinsMonro:
      if (!(warmup >= 0.0 && gamma >= 0.0 && a > 0.0 && b > 0.0)) throw std::invalid_argument("invalid rm schedule");
      return;
    case Kind::Cyclical:
      if (cycles < 1) throw std::invalid_argument("cyclical schedule needs at least one cycle");
      return;
    case Kind::Step:
      if (!(gamma > 0.0) || period < 1) throw std::invalid_argument("invalid step schedule");
      return;
  }
}

double lr_at(const Schedule& s, int t, int epochs_total, double eps0) {
  switch (s.kind) {
    case Schedule::Kind::Constant: return eps0;
    case Schedule::Kind::RobbinsMonro:
      if (t <= s.warmup) return eps0;
      return eps0 / std::pow((t - s.warmup) / s.b + s.a, s.gamma);
    case Schedule::Kind::Cyclical: {
      const double lo = 0.1 * eps0;
      const double total = epochs_total > 0 ? epochs_total : 1;
      const double phase = std::fmod(static_cast<double>(t) * s.cycles / total, 1.0);
      return lo + (eps0 - lo) * (1.0 - std::abs(2.0 * phase - 1.0));
    }
    case Schedule::Kind::Step: {
      double lr = eps0;
      for (int k = t / s.period; k > 0; --k) lr *= s.gamma;
      return lr;
    }
  }
  return eps0;
}

} // namespace mcm::trainer
