#pragma once

#include <stdexcept>
#include <string>

namespace difftester {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

/// Precondition violations by a caller (wrong group/line pairing, empty inputs).
class UsageError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

/// Malformed or out-of-range message on the decoder wire protocol.
class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

class HandshakeError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

/// Stream closed, timed out, or could not be opened.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace difftester
