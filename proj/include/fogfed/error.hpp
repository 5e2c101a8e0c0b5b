#pragma once

#include <stdexcept>
#include <string>

namespace fogfed {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf where a finite value is required.
class InvalidValue : public Error {
public:
    using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// A fog node asked for a window its shard can no longer supply.
class ExhaustedStream : public Error {
public:
    using Error::Error;
};

// Malformed input file. `position` is a 1-based line number for CSV and a
// byte offset for binary files.
class ParseError : public Error {
public:
    ParseError(std::string path, std::size_t position, const std::string& what)
        : Error(path + ":" + std::to_string(position) + ": " + what),
          path_(std::move(path)),
          position_(position) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t position() const noexcept { return position_; }

private:
    std::string path_;
    std::size_t position_;
};

// Round-level protocol violations (mixed rounds, incongruent updates, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Wire decoding failures; `kind` discriminates the cause.
class CodecError : public ProtocolError {
public:
    enum class Kind {
        BadMagic,
        BadVersion,
        Truncated,
        UnsupportedMessage,
        LengthMismatch,
        Malformed,
    };

    CodecError(Kind kind, const std::string& what)
        : ProtocolError(std::string(label(kind)) + ": " + what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static const char* label(Kind kind) noexcept {
        switch (kind) {
            case Kind::BadMagic: return "protocol error: bad magic";
            case Kind::BadVersion: return "protocol error: unsupported version";
            case Kind::Truncated: return "framing error: truncated frame";
            case Kind::UnsupportedMessage: return "unsupported message";
            case Kind::LengthMismatch: return "framing error: length mismatch";
            case Kind::Malformed: return "protocol error: malformed payload";
        }
        return "codec error";
    }

private:
    Kind kind_;
};

}  // namespace fogfed
