#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "elect/rng.hpp"
#include "elect/tensor_io.hpp"

using namespace elect;

TEST(Elct, RoundTripIsBitIdentical) {
    Tensor t = gaussian_noise(3, {1, 16, 16});
    const auto path = std::filesystem::temp_directory_path() / "elect_test_roundtrip.elct";
    write_elct(t, path);
    Tensor back = read_elct(path);
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), 4 * t.size()), 0);
    std::filesystem::remove(path);
}

TEST(Elct, ByteLayoutOfSmallTensor) {
    Tensor t({3, 2}, {1, 2, 3, 4, 5, 6});
    const std::string bytes = encode_elct(t);
    // 8 fixed header bytes + 2 u32 dims = 16, then 6 f32 = 24.
    ASSERT_EQ(bytes.size(), 16u + 24u);
    EXPECT_EQ(bytes.substr(0, 4), "ELCT");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5], 0);
    EXPECT_EQ(bytes[6], 2);
    EXPECT_EQ(bytes[7], 0);
    const unsigned char dims[8] = {3, 0, 0, 0, 2, 0, 0, 0};
    EXPECT_EQ(std::memcmp(bytes.data() + 8, dims, 8), 0);
    // 1.0f little-endian is 00 00 80 3F.
    const unsigned char one[4] = {0x00, 0x00, 0x80, 0x3F};
    EXPECT_EQ(std::memcmp(bytes.data() + 16, one, 4), 0);
}

TEST(Elct, RejectsBadMagic) {
    std::string bytes = encode_elct(Tensor({2}, {1, 2}));
    std::memcpy(bytes.data(), "XXXX", 4);
    EXPECT_THROW(decode_elct(bytes), FormatError);
}

TEST(Elct, RejectsBadVersionDtypeAndLength) {
    const std::string good = encode_elct(Tensor({2}, {1, 2}));
    std::string v = good;
    v[4] = 2;
    EXPECT_THROW(decode_elct(v), FormatError);
    std::string d = good;
    d[5] = 1;
    EXPECT_THROW(decode_elct(d), FormatError);
    EXPECT_THROW(decode_elct(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(decode_elct(good + "x"), FormatError);
    EXPECT_THROW(decode_elct("ELC"), FormatError);
}

TEST(Elct, RejectsNonFinitePayload) {
    std::string bytes = encode_elct(Tensor({1}, {1}));
    const float nan = NAN;
    std::memcpy(bytes.data() + 12, &nan, 4);
    EXPECT_THROW(decode_elct(bytes), FormatError);
}

TEST(Base64, KnownVectors) {
    EXPECT_EQ(base64::encode(""), "");
    EXPECT_EQ(base64::encode("f"), "Zg==");
    EXPECT_EQ(base64::encode("fo"), "Zm8=");
    EXPECT_EQ(base64::encode("foo"), "Zm9v");
    EXPECT_EQ(base64::encode("foobar"), "Zm9vYmFy");
    EXPECT_EQ(base64::decode("Zm9vYmE="), "fooba");
    EXPECT_THROW(base64::decode("Zm9"), FormatError);
    EXPECT_THROW(base64::decode("Zm!v"), FormatError);
}

TEST(Base64, TensorPayloadRoundTrip) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Tensor t = gaussian_noise(seed, {static_cast<std::size_t>(seed % 7 + 1), 3});
        Tensor back = tensor_from_payload_b64(t.shape(), tensor_payload_b64(t));
        ASSERT_EQ(std::memcmp(back.data().data(), t.data().data(), 4 * t.size()), 0);
    }
    EXPECT_THROW(tensor_from_payload_b64({3}, tensor_payload_b64(Tensor({2}))), FormatError);
}
