#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

#include "confine/error.hpp"

namespace confine::crypto {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

inline constexpr int kRsaBits = 3072;
inline constexpr std::size_t kAesKeyBytes = 32;
inline constexpr std::size_t kGcmIvBytes = 12;
inline constexpr std::size_t kGcmTagBytes = 16;

namespace detail {

struct PkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct PkeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct MdCtxDeleter {
    void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};

using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

inline std::string last_error(std::string_view what) {
    std::string msg(what);
    unsigned long code = ERR_get_error();
    if (code != 0) {
        char buf[256];
        ERR_error_string_n(code, buf, sizeof buf);
        msg += ": ";
        msg += buf;
    }
    ERR_clear_error();
    return msg;
}

[[noreturn]] inline void fail(std::string_view what) { throw CryptoError(last_error(what)); }

}  // namespace detail

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(std::span<const std::uint8_t> b) { return std::string(b.begin(), b.end()); }

inline Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
        detail::fail("SHA-256");
    }
    return out;
}

inline Bytes random_bytes(std::size_t n) {
    Bytes out(n);
    if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
        detail::fail("RAND_bytes");
    }
    return out;
}

// base64url without padding ---------------------------------------------------

inline std::string base64url_encode(std::span<const std::uint8_t> data) {
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < data.size(); i += 3) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    if (i + 1 == data.size()) {
        std::uint32_t v = data[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
    } else if (i + 2 == data.size()) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
    }
    return out;
}

inline Bytes base64url_decode(std::string_view text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '-') return 62;
        if (c == '_') return 63;
        return -1;
    };
    while (!text.empty() && text.back() == '=') {
        text.remove_suffix(1);
    }
    if (text.size() % 4 == 1) {
        throw ParseError("base64url: invalid length");
    }
    Bytes out;
    out.reserve(text.size() * 3 / 4);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        int v = value(c);
        if (v < 0) {
            throw ParseError("base64url: invalid character");
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

// RSA -------------------------------------------------------------------------

/// Public half of an RSA key, held as DER SubjectPublicKeyInfo.
class PublicKey {
public:
    PublicKey() = default;

    static PublicKey from_der(Bytes der) {
        PublicKey k;
        const unsigned char* p = der.data();
        k.key_.reset(d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size())), EVP_PKEY_free);
        if (!k.key_ || p != der.data() + der.size()) {
            ERR_clear_error();
            throw CryptoError("malformed public key");
        }
        // d2i_PUBKEY tolerates some encoding variants; only the canonical
        // re-encoding is accepted so that a key has exactly one byte form.
        unsigned char* canon = nullptr;
        int len = i2d_PUBKEY(k.key_.get(), &canon);
        bool canonical = len > 0 && static_cast<std::size_t>(len) == der.size() &&
                         std::equal(der.begin(), der.end(), canon);
        OPENSSL_free(canon);
        if (!canonical) {
            throw CryptoError("non-canonical public key encoding");
        }
        k.der_ = std::move(der);
        return k;
    }

    const Bytes& der() const noexcept { return der_; }
    EVP_PKEY* get() const noexcept { return key_.get(); }
    bool valid() const noexcept { return key_ != nullptr; }

    friend bool operator==(const PublicKey& a, const PublicKey& b) { return a.der_ == b.der_; }

private:
    std::shared_ptr<EVP_PKEY> key_{nullptr, EVP_PKEY_free};
    Bytes der_;
};

/// RSA private key. Move-only.
class KeyPair {
public:
    static KeyPair generate(int bits = kRsaBits) {
        KeyPair kp;
        kp.key_.reset(EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<std::size_t>(bits)));
        if (!kp.key_) {
            detail::fail("RSA key generation");
        }
        unsigned char* der = nullptr;
        int len = i2d_PUBKEY(kp.key_.get(), &der);
        if (len <= 0) {
            detail::fail("public key export");
        }
        Bytes pub(der, der + len);
        OPENSSL_free(der);
        kp.public_ = PublicKey::from_der(std::move(pub));
        return kp;
    }

    const PublicKey& public_key() const noexcept { return public_; }
    EVP_PKEY* get() const noexcept { return key_.get(); }

private:
    KeyPair() = default;
    detail::PkeyPtr key_;
    PublicKey public_;
};

/// RSASSA-PSS with SHA-256, salt length = digest length.
inline Bytes sign_pss(const KeyPair& key, std::span<const std::uint8_t> msg) {
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    EVP_PKEY_CTX* pctx = nullptr;
    if (!ctx || EVP_DigestSignInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.get()) != 1 ||
        EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING) != 1 ||
        EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST) != 1) {
        detail::fail("PSS sign init");
    }
    std::size_t len = 0;
    if (EVP_DigestSign(ctx.get(), nullptr, &len, msg.data(), msg.size()) != 1) {
        detail::fail("PSS sign");
    }
    Bytes sig(len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &len, msg.data(), msg.size()) != 1) {
        detail::fail("PSS sign");
    }
    sig.resize(len);
    return sig;
}

inline bool verify_pss(const PublicKey& key, std::span<const std::uint8_t> msg, std::span<const std::uint8_t> sig) {
    if (!key.valid()) {
        return false;
    }
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    EVP_PKEY_CTX* pctx = nullptr;
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), &pctx, EVP_sha256(), nullptr, key.get()) != 1 ||
        EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PSS_PADDING) != 1 ||
        EVP_PKEY_CTX_set_rsa_pss_saltlen(pctx, RSA_PSS_SALTLEN_DIGEST) != 1) {
        ERR_clear_error();
        return false;
    }
    int rc = EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size());
    ERR_clear_error();
    return rc == 1;
}

namespace detail {

inline bool set_oaep(EVP_PKEY_CTX* ctx) {
    return EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING) == 1 &&
           EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()) == 1 &&
           EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()) == 1;
}

}  // namespace detail

/// RSA-OAEP (SHA-256) encryption of a short secret.
inline Bytes oaep_encrypt(const PublicKey& key, std::span<const std::uint8_t> plain) {
    detail::PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
    if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1 || !detail::set_oaep(ctx.get())) {
        detail::fail("OAEP init");
    }
    std::size_t len = 0;
    if (EVP_PKEY_encrypt(ctx.get(), nullptr, &len, plain.data(), plain.size()) != 1) {
        detail::fail("OAEP encrypt");
    }
    Bytes out(len);
    if (EVP_PKEY_encrypt(ctx.get(), out.data(), &len, plain.data(), plain.size()) != 1) {
        detail::fail("OAEP encrypt");
    }
    out.resize(len);
    return out;
}

inline Bytes oaep_decrypt(const KeyPair& key, std::span<const std::uint8_t> wrapped) {
    detail::PkeyCtxPtr ctx(EVP_PKEY_CTX_new(key.get(), nullptr));
    if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1 || !detail::set_oaep(ctx.get())) {
        detail::fail("OAEP init");
    }
    std::size_t len = 0;
    if (EVP_PKEY_decrypt(ctx.get(), nullptr, &len, wrapped.data(), wrapped.size()) != 1) {
        throw IntegrityError(detail::last_error("key unwrap failed"));
    }
    Bytes out(len);
    if (EVP_PKEY_decrypt(ctx.get(), out.data(), &len, wrapped.data(), wrapped.size()) != 1) {
        throw IntegrityError(detail::last_error("key unwrap failed"));
    }
    out.resize(len);
    return out;
}

// AES-256-GCM -----------------------------------------------------------------

struct Sealed {
    Bytes iv;
    Bytes ciphertext;
    Bytes tag;
};

inline Sealed aes_gcm_seal(std::span<const std::uint8_t> key, std::span<const std::uint8_t> plain,
                           std::span<const std::uint8_t> aad) {
    if (key.size() != kAesKeyBytes) {
        throw CryptoError("AES-256-GCM needs a 32-byte key");
    }
    Sealed s;
    s.iv = random_bytes(kGcmIvBytes);
    s.ciphertext.resize(plain.size());
    s.tag.resize(kGcmTagBytes);
    detail::CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kGcmIvBytes), nullptr) != 1 ||
        EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), s.iv.data()) != 1) {
        detail::fail("GCM init");
    }
    if (!aad.empty() && EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
        detail::fail("GCM aad");
    }
    if (!plain.empty() && EVP_EncryptUpdate(ctx.get(), s.ciphertext.data(), &len, plain.data(),
                                            static_cast<int>(plain.size())) != 1) {
        detail::fail("GCM encrypt");
    }
    if (EVP_EncryptFinal_ex(ctx.get(), s.ciphertext.data() + plain.size(), &len) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kGcmTagBytes), s.tag.data()) != 1) {
        detail::fail("GCM final");
    }
    return s;
}

inline Bytes aes_gcm_open(std::span<const std::uint8_t> key, const Sealed& s, std::span<const std::uint8_t> aad) {
    if (key.size() != kAesKeyBytes || s.iv.size() != kGcmIvBytes || s.tag.size() != kGcmTagBytes) {
        throw IntegrityError("malformed AES-GCM parameters");
    }
    Bytes plain(s.ciphertext.size());
    detail::CipherCtxPtr ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kGcmIvBytes), nullptr) != 1 ||
        EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), s.iv.data()) != 1) {
        detail::fail("GCM init");
    }
    if (!aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) {
        detail::fail("GCM aad");
    }
    if (!s.ciphertext.empty() && EVP_DecryptUpdate(ctx.get(), plain.data(), &len, s.ciphertext.data(),
                                                   static_cast<int>(s.ciphertext.size())) != 1) {
        detail::fail("GCM decrypt");
    }
    Bytes tag = s.tag;
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kGcmTagBytes), tag.data()) != 1) {
        detail::fail("GCM tag");
    }
    if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + plain.size(), &len) != 1) {
        ERR_clear_error();
        throw IntegrityError("segment authentication failed");
    }
    return plain;
}

}  // namespace confine::crypto
