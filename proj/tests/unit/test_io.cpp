#include "hbac/io.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace hbac;

TEST(Io, SplitCsvLineKeepsEmptyFields) {
  EXPECT_EQ(io::split_csv_line("a,,b,"), (std::vector<std::string>{"a", "", "b", ""}));
  EXPECT_EQ(io::split_csv_line("x"), (std::vector<std::string>{"x"}));
}

TEST(Io, TrimStripsWhitespaceAndCarriageReturn) {
  EXPECT_EQ(io::trim("  a b\t\r"), "a b");
  EXPECT_EQ(io::trim(""), "");
}

TEST(Io, Sha256KnownVectors) {
  EXPECT_EQ(io::sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(io::sha256_hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Io, Float32RoundTripIsBitExact) {
  const std::vector<float> v = {0.0f, -0.0f, 1.5f, -3.25e-7f, std::numeric_limits<float>::max(),
                                std::numeric_limits<float>::denorm_min()};
  const auto blob = io::encode_f32_le(v);
  ASSERT_EQ(blob.size(), v.size() * 4);
  EXPECT_EQ(static_cast<unsigned char>(blob[8]), 0x00);  // 1.5f = 0x3FC00000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(blob[11]), 0x3F);
  const auto back = io::decode_f32_le(std::span(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
  EXPECT_EQ(back, v);
}

TEST(Io, DecodeRejectsPartialFloat) {
  const std::vector<std::uint8_t> bytes(7, 0);
  EXPECT_THROW(io::decode_f32_le(bytes), std::exception);
}

TEST(Io, WriteAtomicReplacesAndLeavesNoTemp) {
  fixture::TempDir dir("io");
  const auto p = dir / "sub/out.txt";
  io::write_atomic(p, "first");
  io::write_atomic(p, "second");
  EXPECT_EQ(io::read_text(p), "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(p.parent_path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Io, ReadMissingFileNamesPath) {
  try {
    io::read_text("/nonexistent/hbac/file.txt");
    FAIL() << "expected an exception";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/hbac/file.txt"), std::string::npos);
  }
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0}) EXPECT_EQ(std::stod(io::format_double(v)), v);
}
