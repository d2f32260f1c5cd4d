#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "qpass/errors.hpp"
#include "qpass/postproc.hpp"
#include "qpass/rng.hpp"
#include "qpass/security.hpp"

using namespace qpass;
namespace pp = qpass::postproc;
namespace fs = std::filesystem;

namespace {

pp::BitString random_bits(size_t n, uint64_t seed) {
    pp::BitString s;
    s.bits.resize(n);
    auto rng = CounterRng::stream(seed, 0xB175);
    for (auto& b : s.bits) b = static_cast<uint8_t>(rng.next_u64() & 1u);
    return s;
}

protocol::DetectionRecord make_record(Basis ab, int abit, Channel ch, Intensity in,
                                      int bob_bit_override = -1) {
    protocol::DetectionRecord r;
    r.alice_basis = ab;
    r.alice_bit = static_cast<uint8_t>(abit);
    r.channel = ch;
    r.bob_basis = basis_of(ch);
    r.bob_bit = static_cast<uint8_t>(bob_bit_override >= 0 ? bob_bit_override : bit_of(ch));
    r.intensity = in;
    return r;
}

}  // namespace

TEST_CASE("sift keeps matched bases and preserves order") {
    std::vector<protocol::DetectionRecord> records;
    records.push_back(make_record(Basis::Z, 0, Channel::H, Intensity::Signal));
    records.push_back(make_record(Basis::X, 1, Channel::V, Intensity::Signal));  // mismatch
    records.push_back(make_record(Basis::X, 1, Channel::A, Intensity::Decoy));
    records.push_back(make_record(Basis::Z, 1, Channel::H, Intensity::Signal));  // error
    auto res = pp::sift(records);
    REQUIRE(res.alice.length() == 3);
    CHECK(res.alice.bits == std::vector<uint8_t>{0, 1, 1});
    CHECK(res.bob.bits == std::vector<uint8_t>{0, 1, 0});
    CHECK(res.alice.length() == res.bob.length());
    CHECK(res.per_basis_count[0] == 2.0);
    CHECK(res.per_basis_count[1] == 1.0);
    CHECK(at(res.sifted_per_intensity, Intensity::Signal) == 2.0);
    CHECK(at(res.errors_per_intensity, Intensity::Signal) == 1.0);
}

TEST_CASE("sift extremes: all match, none match") {
    std::vector<protocol::DetectionRecord> all, none;
    for (int i = 0; i < 10; ++i) {
        all.push_back(make_record(Basis::Z, i & 1, i & 1 ? Channel::V : Channel::H,
                                  Intensity::Signal));
        none.push_back(make_record(Basis::X, i & 1, i & 1 ? Channel::V : Channel::H,
                                   Intensity::Signal));
    }
    auto r_all = pp::sift(all);
    CHECK(r_all.alice.length() == 10);
    CHECK(r_all.alice.bits == r_all.bob.bits);  // identity on bits
    auto r_none = pp::sift(none);
    CHECK(r_none.alice.length() == 0);
}

TEST_CASE("sift retention over random bases concentrates at one half") {
    auto rng = CounterRng::stream(31337, 0);
    std::vector<protocol::DetectionRecord> records;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        Basis ab = rng.u01() < 0.5 ? Basis::Z : Basis::X;
        Channel ch = kChannels[rng.below(4)];
        records.push_back(make_record(ab, static_cast<int>(rng.below(2)), ch,
                                      Intensity::Signal));
    }
    double frac = static_cast<double>(pp::sift(records).alice.length()) / n;
    CHECK(frac == doctest::Approx(0.5).epsilon(0.02));  // binomial: 0.5 +- 0.01
}

TEST_CASE("error-correction leakage accounting") {
    CHECK(pp::ec_leakage(12345, 0.0, 1.44) == 0);
    uint64_t got = pp::ec_leakage(1000000, 0.0093, 1.44);
    long double oracle = 1.44L * 1000000.0L * oracles::binary_entropy(0.0093L);
    CHECK(got == static_cast<uint64_t>(std::ceil(static_cast<double>(oracle) - 1e-9)));
    CHECK(got == doctest::Approx(109600).epsilon(0.001));
    CHECK(pp::ec_leakage(1000000, 0.5, 1.0) == 1000000);
}

TEST_CASE("leakage grows with the error rate") {
    uint64_t prev = 0;
    for (double q = 0.0; q <= 0.5; q += 0.05) {
        uint64_t leak = pp::ec_leakage(100000, q, 1.44);
        CHECK(leak >= prev);
        prev = leak;
    }
}

TEST_CASE("privacy amplification matches a hand-built Toeplitz matrix") {
    // 8-bit key, 4-bit output, seed of 11 bits.
    pp::BitString key;
    key.bits = {1, 0, 1, 1, 0, 0, 1, 0};
    pp::PaSeed seed;
    seed.seed_bits.bits = {1, 0, 0, 1, 1, 0, 1, 0, 1, 1, 0};
    auto out = pp::privacy_amplify(key, 4, seed);
    REQUIRE(out.length() == 4);

    const size_t n = 8;
    for (size_t i = 0; i < 4; ++i) {
        int acc = 0;
        for (size_t j = 0; j < n; ++j) {
            // T[i][j] = seed[i - j + n - 1]
            acc ^= seed.seed_bits.bits[i - j + n - 1] & key.bits[j];
        }
        CHECK(out.bits[i] == acc);
    }
}

TEST_CASE("privacy amplification edge cases and dimension checks") {
    pp::BitString key = random_bits(32, 5);
    CHECK(pp::privacy_amplify(key, 0, pp::PaSeed{}).length() == 0);

    pp::BitString zeros;
    zeros.bits.assign(32, 0);
    auto seed = pp::make_pa_seed(32, 8, 99);
    auto out = pp::privacy_amplify(zeros, 8, seed);
    for (auto b : out.bits) CHECK(b == 0);

    pp::PaSeed bad;
    bad.seed_bits = random_bits(10, 1);
    CHECK_THROWS_AS(pp::privacy_amplify(key, 8, bad), NumericError);
    CHECK_THROWS_AS(pp::privacy_amplify(key, 64, pp::make_pa_seed(32, 64, 1)), NumericError);
}

TEST_CASE("privacy amplification is linear over GF(2)") {
    auto rng = CounterRng::stream(8080, 0);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 16 + rng.below(200);
        size_t m = 1 + rng.below(n);
        auto seed = pp::make_pa_seed(n, m, 1000 + trial);
        auto a = random_bits(n, 2 * trial);
        auto b = random_bits(n, 2 * trial + 1);
        pp::BitString a_xor_b;
        a_xor_b.bits.resize(n);
        for (size_t i = 0; i < n; ++i) a_xor_b.bits[i] = a.bits[i] ^ b.bits[i];
        auto pa = pp::privacy_amplify(a, m, seed);
        auto pb = pp::privacy_amplify(b, m, seed);
        auto pab = pp::privacy_amplify(a_xor_b, m, seed);
        for (size_t i = 0; i < m; ++i) {
            CHECK(pab.bits[i] == (pa.bits[i] ^ pb.bits[i]));
        }
    }
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
    auto key = random_bits(1000, 77);
    auto s1 = pp::shuffle_bits(key, 42);
    auto s2 = pp::shuffle_bits(key, 42);
    CHECK(s1.bits == s2.bits);
    auto s3 = pp::shuffle_bits(key, 43);
    CHECK(s1.bits != s3.bits);
    int ones_before = 0, ones_after = 0;
    for (auto b : key.bits) ones_before += b;
    for (auto b : s1.bits) ones_after += b;
    CHECK(ones_before == ones_after);
}

TEST_CASE("one-time pad round trip over random messages") {
    auto rng = CounterRng::stream(1234, 9);
    for (int trial = 0; trial < 1000; ++trial) {
        size_t len = rng.below(64);
        std::vector<uint8_t> msg(len), key(len);
        for (auto& b : msg) b = static_cast<uint8_t>(rng.next_u64());
        for (auto& b : key) b = static_cast<uint8_t>(rng.next_u64());
        auto cipher = pp::otp_apply(msg, key);
        auto back = pp::otp_apply(cipher, key);
        CHECK(back == msg);
    }
}

TEST_CASE("message XORed with an all-zero key is unchanged") {
    std::vector<uint8_t> msg{1, 2, 3, 250};
    std::vector<uint8_t> key(4, 0);
    CHECK(pp::otp_apply(msg, key) == msg);
}

TEST_CASE("key ledger enforces one-time use across the file boundary") {
    auto dir = fs::temp_directory_path() / "qpass_ledger_test";
    fs::create_directories(dir);
    auto path = dir / "test.key";

    std::vector<uint8_t> key_bytes(2048);
    auto rng = CounterRng::stream(5150, 0);
    for (auto& b : key_bytes) b = static_cast<uint8_t>(rng.next_u64());
    pp::KeyLedger::create(path, key_bytes);

    std::vector<uint8_t> msg(1000);
    for (auto& b : msg) b = static_cast<uint8_t>(rng.next_u64());

    {
        auto ledger = pp::KeyLedger::open(path);
        CHECK(ledger.remaining() == 2048);
        auto cipher = pp::otp_encrypt(msg, ledger);
        CHECK(cipher.size() == msg.size());
        CHECK(ledger.remaining() == 1048);
    }
    {
        // reopen: the spent offset must have persisted; decrypting with the
        // next key region does NOT recover the message (no reuse)
        auto ledger = pp::KeyLedger::open(path);
        CHECK(ledger.spent() == 1000);
        auto not_msg = pp::otp_decrypt(pp::otp_apply(msg, key_bytes), ledger);
        CHECK(not_msg != msg);
        CHECK(ledger.remaining() == 48);
        std::vector<uint8_t> big(100);
        CHECK_THROWS_AS(pp::otp_encrypt(big, ledger), KeyExhausted);
    }
    {
        // proper paired use: fresh ledger, encrypt then decrypt with a copy
        auto p2 = dir / "pair.key";
        pp::KeyLedger::create(p2, key_bytes);
        auto alice = pp::KeyLedger::open(p2);
        auto cipher = pp::otp_encrypt(msg, alice);
        auto p3 = dir / "pair_bob.key";
        pp::KeyLedger::create(p3, key_bytes);
        auto bob = pp::KeyLedger::open(p3);
        CHECK(pp::otp_decrypt(cipher, bob) == msg);
    }
    fs::remove_all(dir);
}

TEST_CASE("empty message consumes no key") {
    auto dir = fs::temp_directory_path() / "qpass_ledger_empty";
    fs::create_directories(dir);
    auto path = dir / "k.key";
    pp::KeyLedger::create(path, std::vector<uint8_t>(16, 7));
    auto ledger = pp::KeyLedger::open(path);
    auto out = pp::otp_encrypt({}, ledger);
    CHECK(out.empty());
    CHECK(ledger.spent() == 0);
    fs::remove_all(dir);
}

TEST_CASE("bit/byte conversions round trip") {
    auto bits = random_bits(64, 3);
    auto bytes = bits.to_bytes();
    CHECK(pp::BitString::from_bytes(bytes).bits == bits.bits);
}
