#include <openssl/evp.h>
#include <openssl/rand.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "penrose/paillier.hpp"

namespace penrose::paillier {

namespace keyfile_detail {
std::string b64e(std::span<const uint8_t> d);
std::vector<uint8_t> b64d(std::string_view t);
std::vector<uint8_t> to_bytes(const mpz_class& v);
mpz_class from_bytes(std::span<const uint8_t> b);
}  // namespace keyfile_detail

namespace {

constexpr int kMillerRabinRounds = 64;

mpz_class random_prime(uint32_t bits, Rng& rng) {
    std::vector<uint8_t> buf(bits / 8);
    mpz_class p;
    while (true) {
        rng.fill(buf);
        buf[0] |= 0xC0;                  // full bit length, and products reach 2*bits
        buf[buf.size() - 1] |= 0x01;     // odd
        mpz_import(p.get_mpz_t(), buf.size(), 1, 1, 0, 0, buf.data());
        if (mpz_probab_prime_p(p.get_mpz_t(), kMillerRabinRounds) > 0) return p;
    }
}

mpz_class L(const mpz_class& u, const mpz_class& d) { return (u - 1) / d; }

PrivateKey derive_private(mpz_class p, mpz_class q, uint32_t bits) {
    PrivateKey sk;
    sk.p = std::move(p);
    sk.q = std::move(q);
    mpz_class n = sk.p * sk.q;

    sk.pk.bits = bits;
    sk.pk.n = n;
    sk.pk.n_squared = n * n;
    sk.pk.fingerprint = fingerprint_of(bits, n);

    mpz_class p1 = sk.p - 1, q1 = sk.q - 1;
    mpz_lcm(sk.lambda.get_mpz_t(), p1.get_mpz_t(), q1.get_mpz_t());
    // g = n+1 makes L(g^lambda mod n^2) = lambda mod n, so mu = lambda^{-1} mod n.
    if (mpz_invert(sk.mu.get_mpz_t(), sk.lambda.get_mpz_t(), n.get_mpz_t()) == 0)
        throw Error("keygen: lambda not invertible");

    sk.p_squared = sk.p * sk.p;
    sk.q_squared = sk.q * sk.q;
    // hp = L_p((n+1)^(p-1) mod p^2)^{-1} mod p; with g = n+1 this reduces to
    // ((n mod p^2)*(p-1)/p ... computed directly for clarity.
    mpz_class g = n + 1;
    mpz_class gp, gq;
    mpz_powm(gp.get_mpz_t(), g.get_mpz_t(), p1.get_mpz_t(), sk.p_squared.get_mpz_t());
    mpz_powm(gq.get_mpz_t(), g.get_mpz_t(), q1.get_mpz_t(), sk.q_squared.get_mpz_t());
    mpz_class lp = L(gp, sk.p) % sk.p;
    mpz_class lq = L(gq, sk.q) % sk.q;
    if (mpz_invert(sk.hp.get_mpz_t(), lp.get_mpz_t(), sk.p.get_mpz_t()) == 0 ||
        mpz_invert(sk.hq.get_mpz_t(), lq.get_mpz_t(), sk.q.get_mpz_t()) == 0)
        throw Error("keygen: CRT precomputation failed");
    if (mpz_invert(sk.q_inv_p.get_mpz_t(), sk.q.get_mpz_t(), sk.p.get_mpz_t()) == 0)
        throw Error("keygen: q not invertible mod p");
    return sk;
}

}  // namespace

KeyPair keygen(uint32_t bits, Rng& rng) {
    if (!valid_key_bits(bits)) throw ConfigError("key bits must be 1024, 2048, or 3072");
    while (true) {
        mpz_class p = random_prime(bits / 2, rng);
        mpz_class q = random_prime(bits / 2, rng);
        if (p == q) continue;
        mpz_class n = p * q;
        if (mpz_sizeinbase(n.get_mpz_t(), 2) != bits) continue;
        mpz_class phi = (p - 1) * (q - 1), g;
        mpz_gcd(g.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
        if (g != 1) continue;
        PrivateKey sk = derive_private(std::move(p), std::move(q), bits);
        PublicKey pk = sk.pk;
        return KeyPair{std::move(pk), std::move(sk)};
    }
}

mpz_class decrypt(const PrivateKey& sk, const Ciphertext& c) {
    if (c.value < 0 || c.value >= sk.pk.n_squared) throw Error("malformed ciphertext: not in [0, n^2)");
    // CRT: m_p = L_p(c^(p-1) mod p^2) hp mod p, m_q likewise, recombine.
    mpz_class cp, cq;
    mpz_class p1 = sk.p - 1, q1 = sk.q - 1;
    mpz_powm(cp.get_mpz_t(), c.value.get_mpz_t(), p1.get_mpz_t(), sk.p_squared.get_mpz_t());
    mpz_powm(cq.get_mpz_t(), c.value.get_mpz_t(), q1.get_mpz_t(), sk.q_squared.get_mpz_t());
    mpz_class mp = (L(cp, sk.p) * sk.hp) % sk.p;
    mpz_class mq = (L(cq, sk.q) * sk.hq) % sk.q;
    mpz_class diff = ((mp - mq) % sk.p + sk.p) % sk.p;
    mpz_class m = mq + sk.q * ((diff * sk.q_inv_p) % sk.p);
    return m % sk.pk.n;
}

uint64_t decrypt_u64(const PrivateKey& sk, const Ciphertext& c) {
    mpz_class m = decrypt(sk, c);
    if (mpz_sizeinbase(m.get_mpz_t(), 2) > 64) throw Error("decrypted value exceeds 64 bits");
    uint64_t out = 0;
    mpz_export(&out, nullptr, -1, sizeof(out), 0, 0, m.get_mpz_t());
    return out;
}

std::vector<uint64_t> decrypt_histogram(const PrivateKey& sk, const EncryptedHistogram& h) {
    if (h.key_fingerprint != sk.pk.fingerprint) throw Error("decrypt: key fingerprint mismatch");
    std::vector<uint64_t> out;
    out.reserve(h.bins.size());
    for (const auto& c : h.bins) out.push_back(decrypt_u64(sk, c));
    return out;
}

// --- private key file ---------------------------------------------------

namespace {

constexpr int kPbkdf2Iters = 210000;

std::vector<uint8_t> derive_key(std::string_view passphrase, std::span<const uint8_t> salt) {
    std::vector<uint8_t> key(32);
    if (PKCS5_PBKDF2_HMAC(passphrase.data(), static_cast<int>(passphrase.size()), salt.data(),
                          static_cast<int>(salt.size()), kPbkdf2Iters, EVP_sha256(),
                          static_cast<int>(key.size()), key.data()) != 1)
        throw Error("key derivation failed");
    return key;
}

std::vector<uint8_t> aes_gcm(bool enc, std::span<const uint8_t> key, std::span<const uint8_t> nonce,
                             std::span<const uint8_t> input) {
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    if (!ctx) throw Error("cipher init failed");
    std::vector<uint8_t> out;
    int len = 0;
    bool ok = true;
    std::vector<uint8_t> tag(16);
    if (enc) {
        out.resize(input.size() + 16);
        ok = EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()) == 1 &&
             EVP_EncryptUpdate(ctx, out.data(), &len, input.data(), static_cast<int>(input.size())) == 1;
        int total = len;
        ok = ok && EVP_EncryptFinal_ex(ctx, out.data() + len, &len) == 1;
        total += len;
        ok = ok && EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, 16, tag.data()) == 1;
        out.resize(static_cast<size_t>(total));
        out.insert(out.end(), tag.begin(), tag.end());
    } else {
        if (input.size() < 16) {
            EVP_CIPHER_CTX_free(ctx);
            throw Error("private key file corrupt");
        }
        size_t body = input.size() - 16;
        out.resize(body);
        std::memcpy(tag.data(), input.data() + body, 16);
        ok = EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, key.data(), nonce.data()) == 1 &&
             EVP_DecryptUpdate(ctx, out.data(), &len, input.data(), static_cast<int>(body)) == 1 &&
             EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, 16, tag.data()) == 1;
        int total = len;
        ok = ok && EVP_DecryptFinal_ex(ctx, out.data() + len, &len) == 1;
        total += len;
        if (ok) out.resize(static_cast<size_t>(total));
    }
    EVP_CIPHER_CTX_free(ctx);
    if (!ok) throw Error(enc ? "private key encryption failed"
                             : "private key decryption failed (wrong passphrase?)");
    return out;
}

}  // namespace

void write_private_key_file(const std::filesystem::path& path, const PrivateKey& sk,
                            std::string_view passphrase) {
    using namespace keyfile_detail;
    std::string payload;
    payload += "bits=" + std::to_string(sk.pk.bits) + "\n";
    payload += "p=" + b64e(to_bytes(sk.p)) + "\n";
    payload += "q=" + b64e(to_bytes(sk.q)) + "\n";

    std::vector<uint8_t> salt(16), nonce(12);
    SecureRng rng;
    rng.fill(salt);
    rng.fill(nonce);
    auto key = derive_key(passphrase, salt);
    auto sealed = aes_gcm(true, key, nonce,
                          std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(payload.data()),
                                                   payload.size()));

    std::ofstream out(path);
    if (!out) throw Error("cannot write private key file: " + path.string());
    out << "penrose-private-key v1\n";
    out << "kdf = pbkdf2-sha256/" << kPbkdf2Iters << "\n";
    out << "salt = " << b64e(salt) << "\n";
    out << "nonce = " << b64e(nonce) << "\n";
    out << "data = " << b64e(sealed) << "\n";
    std::filesystem::permissions(path, std::filesystem::perms::owner_read |
                                           std::filesystem::perms::owner_write,
                                 std::filesystem::perm_options::replace);
}

PrivateKey read_private_key_file(const std::filesystem::path& path, std::string_view passphrase) {
    using namespace keyfile_detail;
    std::ifstream in(path);
    if (!in) throw Error("cannot read private key file: " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != "penrose-private-key v1") throw Error("unrecognized private key file");
    std::string line, salt_b64, nonce_b64, data_b64;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string key, eq, val;
        if (!(ss >> key >> eq >> val) || eq != "=") continue;
        if (key == "salt") salt_b64 = val;
        else if (key == "nonce") nonce_b64 = val;
        else if (key == "data") data_b64 = val;
    }
    if (salt_b64.empty() || nonce_b64.empty() || data_b64.empty())
        throw Error("incomplete private key file");
    auto salt = b64d(salt_b64);
    auto nonce = b64d(nonce_b64);
    auto sealed = b64d(data_b64);
    auto key = derive_key(passphrase, salt);
    auto payload = aes_gcm(false, key, nonce, sealed);

    std::istringstream body(std::string(payload.begin(), payload.end()));
    uint32_t bits = 0;
    mpz_class p, q;
    while (std::getline(body, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "bits") bits = static_cast<uint32_t>(std::stoul(v));
        else if (k == "p") p = from_bytes(b64d(v));
        else if (k == "q") q = from_bytes(b64d(v));
    }
    if (!valid_key_bits(bits) || p == 0 || q == 0) throw Error("private key payload corrupt");
    return derive_private(std::move(p), std::move(q), bits);
}

}  // namespace penrose::paillier
