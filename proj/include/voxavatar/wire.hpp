#pragma once

#include "voxavatar/guidance.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace vxa {

// Newline-delimited JSON guidance protocol, version 1. See docs/wire_protocol.md.
//
// Request:  {"v":1,"id":N,"width":W,"height":H,"t":T,"alpha_bar":A,"prompt":"...",
//            "z_t":<base64 f32 LE, row-major RGB>,"condition_labels":<base64 u8 | null>,
//            "cfg_scale":S}
// Response: {"v":1,"id":N,"eps_hat":<base64 f32 LE>}  or  {"v":1,"id":N,"error":"..."}

inline constexpr int kWireVersion = 1;

std::string base64_encode(std::string_view bytes);
/// Throws ProtocolError on malformed input.
std::string base64_decode(std::string_view text);

/// Little-endian f32 payload of an image (row-major, RGB interleaved).
std::string encode_f32_image(const Image& img);
Image decode_f32_image(std::string_view bytes, int width, int height);

struct WireRequest {
    std::uint64_t id = 0;
    int width = 0;
    int height = 0;
    int t = 0;
    Scalar alpha_bar = 0;
    std::string prompt;
    Image z_t;                                  // values exactly representable in f32
    std::optional<LabelArray> condition_labels;  // H x W
    Scalar cfg_scale = 7.5;
};

std::string encode_request(std::uint64_t id, const NoiseQuery& query);
/// Throws ProtocolError (with the id when it could be parsed) on any violation.
WireRequest decode_request(std::string_view line);

std::string encode_response(std::uint64_t id, const Image& eps_hat);
std::string encode_error(std::optional<std::uint64_t> id, std::string_view message);
/// Returns eps_hat; throws ProtocolError for malformed/mismatched responses and
/// GuidanceUnavailable for well-formed error responses.
Image decode_response(std::string_view line, std::uint64_t expected_id, int width, int height);

/// Carries protocol error details, including the request id when recoverable.
struct WireProtocolError : ProtocolError {
    WireProtocolError(const std::string& msg, std::optional<std::uint64_t> request_id)
        : ProtocolError(msg), id(request_id) {}
    std::optional<std::uint64_t> id;
};

/// Serial request/response transport; one in-flight line at a time.
class Channel {
public:
    virtual ~Channel() = default;
    /// Sends one line (without trailing newline) and returns the reply line.
    /// Throws GuidanceUnavailable on timeout or disconnection.
    virtual std::string exchange(const std::string& line, std::chrono::milliseconds timeout) = 0;
};

/// In-process channel that hands each line to a function.
class FunctionChannel final : public Channel {
public:
    explicit FunctionChannel(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
    std::string exchange(const std::string& line, std::chrono::milliseconds) override { return fn_(line); }

private:
    std::function<std::string(const std::string&)> fn_;
};

/// Line exchange over a connected file-descriptor pair (socket or pipes).
class FdChannel : public Channel {
public:
    FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}
    ~FdChannel() override;
    FdChannel(const FdChannel&) = delete;
    FdChannel& operator=(const FdChannel&) = delete;
    std::string exchange(const std::string& line, std::chrono::milliseconds timeout) override;

protected:
    int read_fd_;
    int write_fd_;
    std::string buffer_;
};

/// Connects to host:port over TCP.
std::unique_ptr<Channel> connect_tcp(const std::string& host, int port);

/// Spawns `command` via /bin/sh and talks over its stdin/stdout.
std::unique_ptr<Channel> spawn_process(const std::string& command);

/// Proxy oracle over a channel. Validates shape and finiteness of replies.
class ExternalOracle final : public GuidanceOracle {
public:
    explicit ExternalOracle(std::unique_ptr<Channel> channel,
                            std::chrono::milliseconds timeout = std::chrono::milliseconds(30000))
        : channel_(std::move(channel)), timeout_(timeout) {}
    Image predict_noise(const NoiseQuery& query) override;
    std::uint64_t requests_sent() const { return next_id_ - 1; }

private:
    std::unique_ptr<Channel> channel_;
    std::chrono::milliseconds timeout_;
    std::uint64_t next_id_ = 1;
};

/// Endpoint forms: "tcp://host:port" or "exec:<shell command>".
std::unique_ptr<GuidanceOracle> external_oracle(const std::string& endpoint,
                                                std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

/// Server-side helper: answers decoded requests with `predict`, producing
/// protocol error lines for malformed input instead of failing.
std::string handle_wire_line(const std::string& line, const std::function<Image(const WireRequest&)>& predict);

/// Single-connection TCP server on 127.0.0.1 (ephemeral port) answering lines
/// with `handler` on a background thread until the client disconnects.
class LoopbackServer {
public:
    explicit LoopbackServer(std::function<std::string(const std::string&)> handler);
    ~LoopbackServer();
    LoopbackServer(const LoopbackServer&) = delete;
    LoopbackServer& operator=(const LoopbackServer&) = delete;
    int port() const { return port_; }

private:
    int listen_fd_ = -1;
    int port_ = 0;
    std::jthread thread_;
};

}  // namespace vxa
