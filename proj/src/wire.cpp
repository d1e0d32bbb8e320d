#include "voxavatar/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <nlohmann/json.hpp>

namespace vxa {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Payload encoding

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) | std::uint8_t(bytes[i + 2]);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = std::uint8_t(bytes[i]) << 16;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw ProtocolError("base64 length is not a multiple of 4");
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=' && last && k >= 2) {
                v[k] = 0;
                ++pad;
                continue;
            }
            if (pad > 0) throw ProtocolError("base64 padding in the middle of a group");
            v[k] = b64_value(c);
            if (v[k] < 0) throw ProtocolError("invalid base64 character");
        }
        const std::uint32_t word = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out += char((word >> 16) & 0xff);
        if (pad < 2) out += char((word >> 8) & 0xff);
        if (pad < 1) out += char(word & 0xff);
    }
    return out;
}

std::string encode_f32_image(const Image& img) {
    std::string out(std::size_t(img.pixels.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(float(img.pixels.data()[i]));
        for (int b = 0; b < 4; ++b) out[4 * i + b] = char((u >> (8 * b)) & 0xff);
    }
    return out;
}

Image decode_f32_image(std::string_view bytes, int width, int height) {
    Image img(width, height);
    if (bytes.size() != std::size_t(img.pixels.size()) * 4)
        throw ProtocolError("image payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(img.pixels.size() * 4));
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b) u |= std::uint32_t(std::uint8_t(bytes[4 * i + b])) << (8 * b);
        img.pixels.data()[i] = std::bit_cast<float>(u);
    }
    return img;
}

// ---------------------------------------------------------------------------
// Messages

namespace {

json parse_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw WireProtocolError(std::string("malformed JSON: ") + e.what(), std::nullopt);
    }
    if (!j.is_object()) throw WireProtocolError("message is not a JSON object", std::nullopt);
    return j;
}

std::optional<std::uint64_t> peek_id(const json& j) {
    if (j.contains("id") && j["id"].is_number_unsigned()) return j["id"].get<std::uint64_t>();
    return std::nullopt;
}

void check_version(const json& j, std::optional<std::uint64_t> id) {
    if (!j.contains("v")) throw WireProtocolError("missing protocol version field \"v\"", id);
    if (!j["v"].is_number_integer() || j["v"].get<int>() != kWireVersion)
        throw WireProtocolError("unsupported protocol version " + j["v"].dump(), id);
}

template <typename T>
T field(const json& j, const char* key, std::optional<std::uint64_t> id) {
    if (!j.contains(key)) throw WireProtocolError(std::string("missing field \"") + key + "\"", id);
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        throw WireProtocolError(std::string("field \"") + key + "\" has the wrong type", id);
    }
}

}  // namespace

std::string encode_request(std::uint64_t id, const NoiseQuery& q) {
    json j;
    j["v"] = kWireVersion;
    j["id"] = id;
    j["width"] = q.z_t.width;
    j["height"] = q.z_t.height;
    j["t"] = q.t;
    j["alpha_bar"] = q.alpha_bar;
    j["prompt"] = q.prompt;
    j["z_t"] = base64_encode(encode_f32_image(q.z_t));
    if (q.condition) {
        j["condition_labels"] = base64_encode(
            std::string_view(reinterpret_cast<const char*>(q.condition->labels.data()), std::size_t(q.condition->labels.size())));
    } else {
        j["condition_labels"] = nullptr;
    }
    j["cfg_scale"] = q.cfg_scale;
    return j.dump();
}

WireRequest decode_request(std::string_view line) {
    const json j = parse_line(line);
    const auto id = peek_id(j);
    check_version(j, id);
    if (!id) throw WireProtocolError("missing or invalid request id", std::nullopt);
    WireRequest r;
    r.id = *id;
    r.width = field<int>(j, "width", id);
    r.height = field<int>(j, "height", id);
    if (r.width < 1 || r.height < 1 || r.width > 8192 || r.height > 8192)
        throw WireProtocolError("image dimensions out of range", id);
    r.t = field<int>(j, "t", id);
    r.alpha_bar = field<double>(j, "alpha_bar", id);
    if (!(r.alpha_bar > 0 && r.alpha_bar <= 1)) throw WireProtocolError("alpha_bar outside (0, 1]", id);
    r.prompt = field<std::string>(j, "prompt", id);
    r.cfg_scale = field<double>(j, "cfg_scale", id);
    try {
        r.z_t = decode_f32_image(base64_decode(field<std::string>(j, "z_t", id)), r.width, r.height);
    } catch (const WireProtocolError&) {
        throw;
    } catch (const ProtocolError& e) {
        throw WireProtocolError(std::string("z_t: ") + e.what(), id);
    }
    if (!j.contains("condition_labels")) throw WireProtocolError("missing field \"condition_labels\"", id);
    if (!j["condition_labels"].is_null()) {
        std::string bytes;
        try {
            bytes = base64_decode(field<std::string>(j, "condition_labels", id));
        } catch (const WireProtocolError&) {
            throw;
        } catch (const ProtocolError& e) {
            throw WireProtocolError(std::string("condition_labels: ") + e.what(), id);
        }
        if (bytes.size() != std::size_t(r.width) * r.height)
            throw WireProtocolError("condition_labels has the wrong size", id);
        LabelArray labels(r.height, r.width);
        std::memcpy(labels.data(), bytes.data(), bytes.size());
        if ((labels > std::uint8_t(kPalette.size() - 1)).any()) throw WireProtocolError("condition label outside 0..24", id);
        r.condition_labels = std::move(labels);
    }
    return r;
}

std::string encode_response(std::uint64_t id, const Image& eps_hat) {
    json j;
    j["v"] = kWireVersion;
    j["id"] = id;
    j["eps_hat"] = base64_encode(encode_f32_image(eps_hat));
    return j.dump();
}

std::string encode_error(std::optional<std::uint64_t> id, std::string_view message) {
    json j;
    j["v"] = kWireVersion;
    j["id"] = id ? json(*id) : json(nullptr);
    j["error"] = std::string(message);
    return j.dump();
}

Image decode_response(std::string_view line, std::uint64_t expected_id, int width, int height) {
    const json j = parse_line(line);
    const auto id = peek_id(j);
    check_version(j, id);
    if (!id || *id != expected_id) throw WireProtocolError("response id does not match request " + std::to_string(expected_id), id);
    if (j.contains("error")) {
        const std::string msg = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
        throw GuidanceUnavailable("oracle error for request " + std::to_string(expected_id) + ": " + msg);
    }
    Image eps;
    try {
        eps = decode_f32_image(base64_decode(field<std::string>(j, "eps_hat", id)), width, height);
    } catch (const WireProtocolError&) {
        throw;
    } catch (const ProtocolError& e) {
        throw WireProtocolError(std::string("eps_hat: ") + e.what(), id);
    }
    if (!eps.pixels.allFinite()) throw WireProtocolError("eps_hat contains non-finite values", id);
    return eps;
}

std::string handle_wire_line(const std::string& line, const std::function<Image(const WireRequest&)>& predict) {
    WireRequest req;
    try {
        req = decode_request(line);
    } catch (const WireProtocolError& e) {
        return encode_error(e.id, e.what());
    }
    try {
        Image eps = predict(req);
        if (!eps.same_shape(req.z_t)) return encode_error(req.id, "predictor returned the wrong shape");
        return encode_response(req.id, eps);
    } catch (const std::exception& e) {
        return encode_error(req.id, e.what());
    }
}

// ---------------------------------------------------------------------------
// Transports

namespace {

void ignore_sigpipe() {
    static const bool once = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)once;
}

void write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw GuidanceUnavailable(std::string("oracle channel write failed: ") + std::strerror(errno));
        }
        off += std::size_t(n);
    }
}

// Reads one line, waiting at most `timeout` overall.
std::string read_line(int fd, std::string& buffer, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        const auto nl = buffer.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw GuidanceUnavailable("oracle timed out after " + std::to_string(timeout.count()) + " ms");
        pollfd p{fd, POLLIN, 0};
        const int r = ::poll(&p, 1, int(left.count()));
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) throw GuidanceUnavailable(std::string("poll failed: ") + std::strerror(errno));
        if (r == 0) continue;
        char chunk[65536];
        const ssize_t n = ::read(fd, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw GuidanceUnavailable("oracle channel closed");
        buffer.append(chunk, std::size_t(n));
    }
}

class ProcessChannel final : public FdChannel {
public:
    ProcessChannel(int rfd, int wfd, pid_t pid) : FdChannel(rfd, wfd), pid_(pid) {}
    ~ProcessChannel() override {
        if (write_fd_ >= 0) ::close(write_fd_);
        write_fd_ = -1;
        int status = 0;
        // Give the child a moment to exit on EOF before killing it.
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
            ::usleep(10000);
        }
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, &status, 0);
    }

private:
    pid_t pid_;
};

}  // namespace

FdChannel::~FdChannel() {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

std::string FdChannel::exchange(const std::string& line, std::chrono::milliseconds timeout) {
    write_all(write_fd_, line + "\n");
    return read_line(read_fd_, buffer_, timeout);
}

std::unique_ptr<Channel> connect_tcp(const std::string& host, int port) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw GuidanceUnavailable("cannot resolve " + host);
    int fd = -1;
    for (addrinfo* a = res; a; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw GuidanceUnavailable("cannot connect to " + host + ":" + std::to_string(port));
    return std::make_unique<FdChannel>(fd, fd);
}

std::unique_ptr<Channel> spawn_process(const std::string& command) {
    ignore_sigpipe();
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw GuidanceUnavailable("pipe failed");
    if (::pipe(from_child) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw GuidanceUnavailable("pipe failed");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw GuidanceUnavailable("fork failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::make_unique<ProcessChannel>(from_child[0], to_child[1], pid);
}

Image ExternalOracle::predict_noise(const NoiseQuery& q) {
    const std::uint64_t id = next_id_++;
    const std::string reply = channel_->exchange(encode_request(id, q), timeout_);
    Image eps = decode_response(reply, id, q.z_t.width, q.z_t.height);
    return eps;
}

std::unique_ptr<GuidanceOracle> external_oracle(const std::string& endpoint, std::chrono::milliseconds timeout) {
    if (endpoint.rfind("tcp://", 0) == 0) {
        const std::string rest = endpoint.substr(6);
        const auto colon = rest.rfind(':');
        if (colon == std::string::npos) throw InvalidInput("tcp endpoint needs host:port");
        int port = 0;
        try {
            port = std::stoi(rest.substr(colon + 1));
        } catch (const std::exception&) {
            throw InvalidInput("invalid port in endpoint " + endpoint);
        }
        return std::make_unique<ExternalOracle>(connect_tcp(rest.substr(0, colon), port), timeout);
    }
    if (endpoint.rfind("exec:", 0) == 0) return std::make_unique<ExternalOracle>(spawn_process(endpoint.substr(5)), timeout);
    throw InvalidInput("unknown oracle endpoint '" + endpoint + "' (use tcp://host:port or exec:command)");
}

// ---------------------------------------------------------------------------
// Loopback server

LoopbackServer::LoopbackServer(std::function<std::string(const std::string&)> handler) {
    ignore_sigpipe();
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("socket failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 1) != 0) {
        ::close(listen_fd_);
        throw IoError("cannot listen on loopback");
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::jthread([this, handler = std::move(handler)](std::stop_token stop) {
        int conn = -1;
        while (!stop.stop_requested() && conn < 0) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 50) > 0) conn = ::accept(listen_fd_, nullptr, nullptr);
        }
        if (conn < 0) return;
        std::string buffer;
        while (!stop.stop_requested()) {
            std::string line;
            try {
                line = read_line(conn, buffer, std::chrono::milliseconds(100));
            } catch (const GuidanceUnavailable& e) {
                if (std::string(e.what()).find("timed out") != std::string::npos) continue;
                break;
            }
            try {
                write_all(conn, handler(line) + "\n");
            } catch (const std::exception&) {
                break;
            }
        }
        ::close(conn);
    });
}

LoopbackServer::~LoopbackServer() {
    thread_.request_stop();
    if (thread_.joinable()) thread_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

}  // namespace vxa
