#include "ontoprompt/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utypes.h>

#include <stdexcept>

namespace ontoprompt::text {

std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString dst = normalizer->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

std::string fold_case(std::string_view utf8) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  s.foldCase();
  std::string out;
  s.toUTF8String(out);
  return out;
}

std::size_t code_points(std::string_view utf8) {
  const icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  return static_cast<std::size_t>(s.countChar32());
}

}  // namespace ontoprompt::text

namespace ontoprompt::text {
namespace {

icu::UnicodeString from_utf8(std::string_view utf8) {
  return icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
}

std::string to_utf8(const icu::UnicodeString& s) {
  std::string out;
  s.toUTF8String(out);
  return out;
}

bool is_whitespace_control(UChar32 c) {
  return c == 0x09 || c == 0x0A || c == 0x0B || c == 0x0C || c == 0x0D;
}

}  // namespace

std::string strip_control(std::string_view utf8) {
  const icu::UnicodeString src = from_utf8(utf8);
  icu::UnicodeString dst;
  for (int32_t i = 0; i < src.length();) {
    const UChar32 c = src.char32At(i);
    i += U16_LENGTH(c);
    const bool control = c < 0x20 || (c >= 0x7F && c <= 0x9F);
    if (!control || is_whitespace_control(c)) dst.append(c);
  }
  return to_utf8(dst);
}

std::string collapse_whitespace(std::string_view utf8) {
  const icu::UnicodeString src = from_utf8(utf8);
  icu::UnicodeString dst;
  bool pending_space = false;
  for (int32_t i = 0; i < src.length();) {
    const UChar32 c = src.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !dst.isEmpty();
      continue;
    }
    if (pending_space) dst.append(static_cast<UChar>(' '));
    pending_space = false;
    dst.append(c);
  }
  return to_utf8(dst);
}

std::string truncate(std::string_view utf8, std::size_t max_code_points) {
  const icu::UnicodeString src = from_utf8(utf8);
  if (static_cast<std::size_t>(src.countChar32()) <= max_code_points) return to_utf8(src);
  const int32_t end = src.moveIndex32(0, static_cast<int32_t>(max_code_points));
  return to_utf8(icu::UnicodeString(src, 0, end));
}

bool is_blank(std::string_view utf8) {
  const icu::UnicodeString src = from_utf8(utf8);
  for (int32_t i = 0; i < src.length();) {
    const UChar32 c = src.char32At(i);
    i += U16_LENGTH(c);
    if (!u_isUWhiteSpace(c) && !(c < 0x20 || (c >= 0x7F && c <= 0x9F))) return false;
  }
  return true;
}

}  // namespace ontoprompt::text
