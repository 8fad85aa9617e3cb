#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace confine {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

class MergeError : public Error {
public:
    using Error::Error;
};

/// Two inputs claim the same event, or the same delivery arrived twice.
class ConflictError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

/// Authenticated decryption failed or a key could not be unwrapped.
class IntegrityError : public Error {
public:
    using Error::Error;
};

class CryptoError : public Error {
public:
    using Error::Error;
};

class UnknownCasesError : public Error {
public:
    UnknownCasesError(std::string what, std::vector<std::string> missing)
        : Error(std::move(what)), missing_(std::move(missing)) {}

    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

class ForbiddenError : public Error {
public:
    using Error::Error;
};

/// Raised when the simulated enclave would exceed its memory capacity.
/// Mirrors the TEE behaviour of halting instead of paging.
class EnclaveMemoryExceeded : public Error {
public:
    EnclaveMemoryExceeded(std::string what, std::size_t requested, std::size_t in_use, std::size_t capacity)
        : Error(std::move(what)), requested_(requested), in_use_(in_use), capacity_(capacity) {}

    std::size_t requested() const noexcept { return requested_; }
    std::size_t in_use() const noexcept { return in_use_; }
    std::size_t capacity() const noexcept { return capacity_; }

private:
    std::size_t requested_;
    std::size_t in_use_;
    std::size_t capacity_;
};

class InitError : public Error {
public:
    using Error::Error;
};

class AttestationRejected : public Error {
public:
    AttestationRejected(std::string what, std::string org, std::string reason)
        : Error(std::move(what)), org_(std::move(org)), reason_(std::move(reason)) {}

    const std::string& org() const noexcept { return org_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::string org_;
    std::string reason_;
};

class DeliveryError : public Error {
public:
    using Error::Error;
};

/// Acquisition timed out with cases still waiting on some holders.
class IncompleteCasesError : public Error {
public:
    IncompleteCasesError(std::string what, std::vector<std::string> stragglers)
        : Error(std::move(what)), stragglers_(std::move(stragglers)) {}

    const std::vector<std::string>& stragglers() const noexcept { return stragglers_; }

private:
    std::vector<std::string> stragglers_;
};

}  // namespace confine
