#include "nwqm/quality.hpp"

#include <cctype>
#include <cmath>

#include "nwqm/error.hpp"
#include "nwqm/random.hpp"

namespace nwqm {

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames = {"Stub", "Start", "C", "B", "GA", "FA"};

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

}  // namespace

QualityClass class_from_ordinal(int ordinal) {
  if (ordinal < 0 || ordinal >= kNumClasses) {
    throw Error("quality ordinal out of range: " + std::to_string(ordinal));
  }
  return static_cast<QualityClass>(ordinal);
}

std::string_view to_string(QualityClass c) { return kNames[static_cast<std::size_t>(ordinal(c))]; }

std::optional<QualityClass> parse_quality_class(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  for (int i = 0; i < kNumClasses; ++i) {
    if (iequals(text, kNames[static_cast<std::size_t>(i)])) return static_cast<QualityClass>(i);
  }
  return std::nullopt;
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw Error("uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace nwqm
