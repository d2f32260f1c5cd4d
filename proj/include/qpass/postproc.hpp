#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qpass/channel.hpp"
#include "qpass/protocol.hpp"

namespace qpass::postproc {

/// Sequence of key bits stored one per byte (values 0/1).
struct BitString {
    std::vector<uint8_t> bits;

    size_t length() const { return bits.size(); }
    bool operator==(const BitString& other) const = default;

    static BitString from_bytes(const std::vector<uint8_t>& bytes);
    std::vector<uint8_t> to_bytes() const;  // pads the tail with zero bits
};

struct SiftResult {
    BitString alice;
    BitString bob;
    std::array<double, 2> per_basis_count{};          // sifted bits per basis
    IntensityArray<double> sifted_per_intensity{};
    IntensityArray<double> errors_per_intensity{};
};

/// Keep records where Alice's and Bob's bases match, preserving order.
SiftResult sift(const std::vector<protocol::DetectionRecord>& records);

/// Error-correction leakage accounting: ceil(f_ec * n * h(qber)).
uint64_t ec_leakage(uint64_t n, double qber, double f_ec);

struct PaSeed {
    BitString seed_bits;  // length in_len + out_len - 1
};

/// Toeplitz-hash compression over GF(2): out[i] = XOR_j T[i][j] key[j] with
/// T[i][j] = seed[i - j + n - 1]. Deterministic in the seed.
BitString privacy_amplify(const BitString& key, size_t out_len, const PaSeed& seed);

/// Derive a pseudorandom seed of the right size for n -> m hashing.
PaSeed make_pa_seed(size_t in_len, size_t out_len, uint64_t rng_seed);

/// Seeded Fisher-Yates permutation of the key bits.
BitString shuffle_bits(const BitString& key, uint64_t rng_seed);

/// File-backed one-time-pad key store. Layout: 16-byte header (magic,
/// version, key length in bytes, spent offset) followed by raw key bytes.
/// Consumed bytes are marked spent so no region is ever reused.
class KeyLedger {
public:
    static constexpr uint32_t kMagic = 0x314B5051;  // "QPK1"
    static constexpr uint32_t kVersion = 1;

    static KeyLedger create(const std::filesystem::path& path,
                            const std::vector<uint8_t>& key_bytes);
    static KeyLedger open(const std::filesystem::path& path);

    uint64_t remaining() const { return length_ - spent_; }
    uint64_t spent() const { return spent_; }
    uint64_t length() const { return length_; }

    /// Take n fresh key bytes, advance the spent marker and persist it.
    std::vector<uint8_t> consume(size_t n);  // throws KeyExhausted

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::vector<uint8_t> key_;
    uint64_t length_ = 0;
    uint64_t spent_ = 0;

    void persist() const;
};

/// Bytewise XOR; key must be at least as long as the message.
std::vector<uint8_t> otp_apply(const std::vector<uint8_t>& message,
                               const std::vector<uint8_t>& key_bytes);

/// Encrypt/decrypt against a ledger, consuming key material exactly once.
std::vector<uint8_t> otp_encrypt(const std::vector<uint8_t>& message, KeyLedger& ledger);
std::vector<uint8_t> otp_decrypt(const std::vector<uint8_t>& cipher, KeyLedger& ledger);

}  // namespace qpass::postproc
