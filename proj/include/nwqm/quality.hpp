#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace nwqm {

/// Wikipedia assessment classes; the enumerator value is the ordinal (Stub=0 .. FA=5).
enum class QualityClass : int { kStub = 0, kStart = 1, kC = 2, kB = 3, kGA = 4, kFA = 5 };

inline constexpr int kNumClasses = 6;

inline constexpr std::array<QualityClass, kNumClasses> kAllClasses = {
    QualityClass::kStub, QualityClass::kStart, QualityClass::kC,
    QualityClass::kB,    QualityClass::kGA,    QualityClass::kFA};

constexpr int ordinal(QualityClass c) { return static_cast<int>(c); }

QualityClass class_from_ordinal(int ordinal);

std::string_view to_string(QualityClass c);

/// Case-insensitive match against FA, GA, B, C, Start, Stub (surrounding blanks ignored).
std::optional<QualityClass> parse_quality_class(std::string_view text);

}  // namespace nwqm
