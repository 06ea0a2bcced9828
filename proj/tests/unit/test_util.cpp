#include <doctest.h>

#include <random>

#include "forgebench/error.hpp"
#include "forgebench/util.hpp"
#include "oracles.hpp"

using namespace forgebench;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("base64 round trip and RFC 4648 vectors") {
  const std::pair<const char*, const char*> vectors[] = {
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
      {"foobar", "Zm9vYmFy"}};
  for (auto [plain, encoded] : vectors) {
    const std::string_view p(plain);
    const Bytes bytes(p.begin(), p.end());
    CHECK(base64_encode(bytes) == encoded);
    CHECK(base64_decode(encoded) == bytes);
  }
  std::mt19937_64 rng(3);
  for (int n = 0; n < 40; ++n) {
    Bytes bytes(static_cast<std::size_t>(n));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
}

TEST_CASE("uniform_index stays in range and covers it") {
  std::mt19937_64 rng(11);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) ++seen[uniform_index(rng, 7)];
  for (int c : seen) CHECK(c > 800);
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b;
  for (int i = 0; i < 50; ++i) a[static_cast<std::size_t>(i)] = i;
  b = a;
  std::mt19937_64 r1(5), r2(5);
  shuffle_in_place(r1, a);
  shuffle_in_place(r2, b);
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("file helpers") {
  oracle::TempDir dir("util");
  const auto path = dir.path() / "nested" / "x.txt";
  write_file_atomic(path, "hello");
  CHECK(read_file_text(path) == "hello");
  CHECK_THROWS_AS(read_file_bytes(dir.path() / "missing"), Error);
}

TEST_CASE("slugs and trimming") {
  CHECK(file_slug("CNN (OH-JPEG)") == "CNN_OH-JPEG");
  CHECK(trim("  a b \n") == "a b");
  CHECK(split_whitespace(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("error categories drive exit codes") {
  CHECK(error_category(ErrorCode::ConfigError) == ErrorCategory::Usage);
  CHECK(error_category(ErrorCode::AuthError) == ErrorCategory::Transport);
  CHECK(error_category(ErrorCode::CorruptStream) == ErrorCategory::Data);
  const Error e(ErrorCode::DuplicateId, "x");
  CHECK(std::string(e.what()).find("DuplicateId") != std::string::npos);
}
