#include <gtest/gtest.h>

#include "fragkey/bits.hpp"
#include "fragkey/error.hpp"

using fragkey::BitString;

TEST(BitString, TextRoundTrip) {
  for (const char* text : {"", "1", "0", "10101", "1010101010", "0000000011111111", "101100111"}) {
    EXPECT_EQ(BitString::from_text(text).to_text(), text);
  }
}

TEST(BitString, MsbFirstPacking) {
  const auto b = BitString::from_text("1010101010");
  ASSERT_EQ(b.size(), 10u);
  ASSERT_EQ(b.bytes().size(), 2u);
  EXPECT_EQ(b.bytes()[0], 0xAA);
  EXPECT_EQ(b.bytes()[1], 0x80);
  EXPECT_EQ(b.to_hex(), "aa80");
}

TEST(BitString, SliceAndAppendAreInverse) {
  const auto b = BitString::from_text("110100111010001");
  for (std::size_t cut = 0; cut <= b.size(); ++cut) {
    auto head = b.slice(0, cut);
    head.append(b.slice(cut, b.size() - cut));
    EXPECT_EQ(head, b) << "cut at " << cut;
  }
}

TEST(BitString, RejectsNonzeroPadding) {
  EXPECT_THROW(BitString({0xFF}, 4), fragkey::Error);
  EXPECT_THROW(BitString({0xF0, 0x00}, 4), fragkey::Error);
  EXPECT_NO_THROW(BitString({0xF0}, 4));
}

TEST(BitString, RejectsBadText) { EXPECT_THROW(BitString::from_text("10x1"), fragkey::Error); }

TEST(BitString, SliceOutOfRange) {
  const auto b = BitString::from_text("1010");
  EXPECT_THROW(b.slice(3, 2), fragkey::Error);
  EXPECT_THROW(b.bit(4), fragkey::Error);
}
