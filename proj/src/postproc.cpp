#include "qpass/postproc.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "qpass/errors.hpp"
#include "qpass/rng.hpp"
#include "qpass/security.hpp"

namespace qpass::postproc {

BitString BitString::from_bytes(const std::vector<uint8_t>& bytes) {
    BitString out;
    out.bits.reserve(bytes.size() * 8);
    for (uint8_t b : bytes) {
        for (int i = 7; i >= 0; --i) out.bits.push_back((b >> i) & 1u);
    }
    return out;
}

std::vector<uint8_t> BitString::to_bytes() const {
    std::vector<uint8_t> out((bits.size() + 7) / 8, 0);
    for (size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) out[i / 8] |= static_cast<uint8_t>(1u << (7 - i % 8));
    }
    return out;
}

SiftResult sift(const std::vector<protocol::DetectionRecord>& records) {
    SiftResult r;
    for (const auto& rec : records) {
        if (rec.alice_basis != rec.bob_basis) continue;
        r.alice.bits.push_back(rec.alice_bit);
        r.bob.bits.push_back(rec.bob_bit);
        r.per_basis_count[static_cast<size_t>(rec.alice_basis)] += 1.0;
        at(r.sifted_per_intensity, rec.intensity) += 1.0;
        if (rec.alice_bit != rec.bob_bit) {
            at(r.errors_per_intensity, rec.intensity) += 1.0;
        }
    }
    return r;
}

uint64_t ec_leakage(uint64_t n, double qber, double f_ec) {
    if (!(qber >= 0.0 && qber <= 0.5)) throw NumericError("ec_leakage: qber must be in [0, 0.5]");
    if (!(f_ec >= 1.0)) throw NumericError("ec_leakage: f_ec must be >= 1");
    double bits = f_ec * static_cast<double>(n) * security::binary_entropy(qber);
    return static_cast<uint64_t>(std::ceil(bits - 1e-9));
}

BitString privacy_amplify(const BitString& key, size_t out_len, const PaSeed& seed) {
    const size_t n = key.length();
    if (out_len > n) throw NumericError("privacy_amplify: out_len must be <= key length");
    BitString out;
    out.bits.assign(out_len, 0);
    if (out_len == 0 || n == 0) return out;
    if (seed.seed_bits.length() != n + out_len - 1) {
        throw NumericError("privacy_amplify: seed length must be n + m - 1");
    }

    // out[i] = XOR_j seed[i - j + n - 1] key[j]
    //        = parity of (reversed key) AND (seed window starting at i).
    const size_t words = (n + 63) / 64;
    std::vector<uint64_t> krev(words, 0);
    for (size_t j = 0; j < n; ++j) {
        if (key.bits[n - 1 - j]) krev[j / 64] |= (uint64_t{1} << (j % 64));
    }
    const size_t seed_len = seed.seed_bits.length();
    const size_t seed_words = (seed_len + 63) / 64 + 1;
    std::vector<uint64_t> sw(seed_words, 0);
    for (size_t k = 0; k < seed_len; ++k) {
        if (seed.seed_bits.bits[k]) sw[k / 64] |= (uint64_t{1} << (k % 64));
    }
    for (size_t i = 0; i < out_len; ++i) {
        const size_t word_off = i / 64;
        const unsigned bit_off = i % 64;
        uint64_t acc = 0;
        for (size_t w = 0; w < words; ++w) {
            uint64_t window = sw[word_off + w] >> bit_off;
            if (bit_off) window |= sw[word_off + w + 1] << (64 - bit_off);
            acc ^= window & krev[w];
        }
        out.bits[i] = static_cast<uint8_t>(__builtin_popcountll(acc) & 1);
    }
    return out;
}

PaSeed make_pa_seed(size_t in_len, size_t out_len, uint64_t rng_seed) {
    PaSeed seed;
    size_t len = out_len == 0 ? 0 : in_len + out_len - 1;
    seed.seed_bits.bits.resize(len);
    auto rng = CounterRng::stream(rng_seed, 0x9A5EED);
    for (size_t i = 0; i < len; ++i) {
        seed.seed_bits.bits[i] = static_cast<uint8_t>(rng.next_u64() & 1u);
    }
    return seed;
}

BitString shuffle_bits(const BitString& key, uint64_t rng_seed) {
    BitString out = key;
    auto rng = CounterRng::stream(rng_seed, 0x5455FF1E);
    for (size_t i = out.bits.size(); i > 1; --i) {
        size_t j = rng.below(i);
        std::swap(out.bits[i - 1], out.bits[j]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// KeyLedger

namespace {

void write_u32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v));
    buf.push_back(static_cast<uint8_t>(v >> 8));
    buf.push_back(static_cast<uint8_t>(v >> 16));
    buf.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void KeyLedger::persist() const {
    std::vector<uint8_t> buf;
    buf.reserve(16 + key_.size());
    write_u32(buf, kMagic);
    write_u32(buf, kVersion);
    write_u32(buf, static_cast<uint32_t>(length_));
    write_u32(buf, static_cast<uint32_t>(spent_));
    buf.insert(buf.end(), key_.begin(), key_.end());

    auto tmp = path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()));
        if (!out.good()) throw ConfigError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw ConfigError("rename failed for '" + path_.string() + "'");
}

KeyLedger KeyLedger::create(const std::filesystem::path& path,
                            const std::vector<uint8_t>& key_bytes) {
    if (key_bytes.size() > 0xFFFFFFFFull) throw ConfigError("key ledger: key too large");
    KeyLedger ledger;
    ledger.path_ = path;
    ledger.key_ = key_bytes;
    ledger.length_ = key_bytes.size();
    ledger.spent_ = 0;
    ledger.persist();
    return ledger;
}

KeyLedger KeyLedger::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open key file '" + path.string() + "'");
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 16) throw ConfigError("key file too short: '" + path.string() + "'");
    if (read_u32(buf.data()) != kMagic) {
        throw ConfigError("not a key file (bad magic): '" + path.string() + "'");
    }
    if (read_u32(buf.data() + 4) != kVersion) {
        throw ConfigError("unsupported key file version: '" + path.string() + "'");
    }
    KeyLedger ledger;
    ledger.path_ = path;
    ledger.length_ = read_u32(buf.data() + 8);
    ledger.spent_ = read_u32(buf.data() + 12);
    if (buf.size() != 16 + ledger.length_ || ledger.spent_ > ledger.length_) {
        throw ConfigError("corrupt key file: '" + path.string() + "'");
    }
    ledger.key_.assign(buf.begin() + 16, buf.end());
    return ledger;
}

std::vector<uint8_t> KeyLedger::consume(size_t n) {
    if (n > remaining()) {
        throw KeyExhausted("key exhausted: need " + std::to_string(n) + " bytes, " +
                           std::to_string(remaining()) + " unspent");
    }
    std::vector<uint8_t> out(key_.begin() + static_cast<ptrdiff_t>(spent_),
                             key_.begin() + static_cast<ptrdiff_t>(spent_ + n));
    spent_ += n;
    persist();
    return out;
}

// ---------------------------------------------------------------------------
// One-time pad

std::vector<uint8_t> otp_apply(const std::vector<uint8_t>& message,
                               const std::vector<uint8_t>& key_bytes) {
    if (key_bytes.size() < message.size()) {
        throw KeyExhausted("key shorter than message");
    }
    std::vector<uint8_t> out(message.size());
    for (size_t i = 0; i < message.size(); ++i) out[i] = message[i] ^ key_bytes[i];
    return out;
}

std::vector<uint8_t> otp_encrypt(const std::vector<uint8_t>& message, KeyLedger& ledger) {
    auto key = ledger.consume(message.size());
    return otp_apply(message, key);
}

std::vector<uint8_t> otp_decrypt(const std::vector<uint8_t>& cipher, KeyLedger& ledger) {
    auto key = ledger.consume(cipher.size());
    return otp_apply(cipher, key);
}

}  // namespace qpass::postproc
