#include "voxavatar/wire.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <random>

using namespace vxa;
using nlohmann::json;

namespace {

Image f32_image(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(-3, 3);
    Image img(w, h);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = u(rng);
    return img;
}

bool is_error_reply(const std::string& line, std::optional<std::uint64_t> id) {
    const json j = json::parse(line);
    if (!j.contains("error") || j.at("v") != 1) return false;
    return id ? j.at("id") == *id : j.at("id").is_null();
}

}  // namespace

TEST_CASE("base64") {
    // RFC 4648 test vectors
    const std::pair<const char*, const char*> vectors[] = {{"", ""},         {"f", "Zg=="},         {"fo", "Zm8="},
                                                           {"foo", "Zm9v"},  {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="},
                                                           {"foobar", "Zm9vYmFy"}};
    for (auto [plain, coded] : vectors) {
        CHECK(base64_encode(plain) == coded);
        CHECK(base64_decode(coded) == plain);
    }
    CHECK_THROWS_AS(base64_decode("Zm9"), ProtocolError);
    CHECK_THROWS_AS(base64_decode("Zm=v"), ProtocolError);
    CHECK_THROWS_AS(base64_decode("Zm9*"), ProtocolError);
}

TEST_CASE("f32 payload preserves bit patterns") {
    std::mt19937 rng(12);
    Image img(17, 3);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        float f;
        do f = std::bit_cast<float>(std::uint32_t(rng()));
        while (!std::isfinite(f));
        img.pixels.data()[i] = f;
    }
    const std::string bytes = encode_f32_image(img);
    REQUIRE(bytes.size() == std::size_t(4 * img.pixels.size()));
    // row-major, RGB interleaved, little endian
    std::uint32_t first = 0;
    for (int b = 3; b >= 0; --b) first = (first << 8) | std::uint8_t(bytes[b]);
    CHECK(first == std::bit_cast<std::uint32_t>(float(img.pixel(0, 0)[0])));
    const Image back = decode_f32_image(base64_decode(base64_encode(bytes)), 17, 3);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i)
        CHECK(std::bit_cast<std::uint32_t>(float(back.pixels.data()[i])) ==
              std::bit_cast<std::uint32_t>(float(img.pixels.data()[i])));
    CHECK_THROWS_AS(decode_f32_image(bytes, 16, 3), ProtocolError);
}

TEST_CASE("request round trip") {
    std::mt19937_64 rng(3);
    const Image z = f32_image(6, 4, rng);
    const std::string prompt = "a \"quoted\" prompt\nwith newline";
    ConditionImage c;
    c.width = 6;
    c.height = 4;
    c.labels = LabelArray::Zero(4, 6);
    c.labels(1, 2) = 24;
    c.labels(3, 5) = 7;
    const NoiseQuery q{z, 321, 0.625, &c, prompt, 5.0};
    const std::string line = encode_request(42, q);
    CHECK(line.find('\n') == std::string::npos);
    const WireRequest r = decode_request(line);
    CHECK(r.id == 42);
    CHECK(r.width == 6);
    CHECK(r.height == 4);
    CHECK(r.t == 321);
    CHECK(r.alpha_bar == 0.625);
    CHECK(r.prompt == prompt);
    CHECK(r.cfg_scale == 5.0);
    CHECK((r.z_t.pixels == z.pixels).all());
    REQUIRE(r.condition_labels);
    CHECK((*r.condition_labels == c.labels).all());

    const NoiseQuery bare{z, 1, 0.5, nullptr, prompt};
    CHECK(json::parse(encode_request(1, bare)).at("condition_labels").is_null());
    CHECK_FALSE(decode_request(encode_request(1, bare)).condition_labels);
}

TEST_CASE("request validation") {
    std::mt19937_64 rng(4);
    const Image z = f32_image(2, 2, rng);
    const NoiseQuery q{z, 5, 0.5, nullptr, std::string("p")};
    const json good = json::parse(encode_request(9, q));

    auto fails_with_id = [&](json j, std::optional<std::uint64_t> id) {
        try {
            decode_request(j.dump());
        } catch (const WireProtocolError& e) {
            return e.id == id;
        }
        return false;
    };
    json v2 = good;
    v2["v"] = 2;
    CHECK(fails_with_id(v2, 9));
    json no_id = good;
    no_id.erase("id");
    CHECK(fails_with_id(no_id, std::nullopt));
    json small = good;
    small["width"] = 3;
    CHECK(fails_with_id(small, 9));
    json ab = good;
    ab["alpha_bar"] = 0.0;
    CHECK(fails_with_id(ab, 9));
    json type = good;
    type["t"] = "five";
    CHECK(fails_with_id(type, 9));
    json label = good;
    label["condition_labels"] = base64_encode(std::string("\x01\x02\x03\x19", 4));
    CHECK(fails_with_id(label, 9));
    CHECK_THROWS_AS(decode_request("{not json"), WireProtocolError);
    CHECK_THROWS_AS(decode_request("[1,2]"), WireProtocolError);
}

TEST_CASE("response decoding") {
    std::mt19937_64 rng(5);
    const Image eps = f32_image(3, 2, rng);
    const std::string ok = encode_response(7, eps);
    CHECK((decode_response(ok, 7, 3, 2).pixels == eps.pixels).all());
    CHECK_THROWS_AS(decode_response(ok, 8, 3, 2), ProtocolError);
    CHECK_THROWS_AS(decode_response(ok, 7, 2, 3 + 1), ProtocolError);
    CHECK_THROWS_AS(decode_response("garbage", 7, 3, 2), ProtocolError);

    json bad = json::parse(ok);
    bad["eps_hat"] = "!!!!";
    CHECK_THROWS_AS(decode_response(bad.dump(), 7, 3, 2), ProtocolError);
    Image nan = eps;
    nan.pixels(0, 0) = std::numeric_limits<Scalar>::quiet_NaN();
    CHECK_THROWS_AS(decode_response(encode_response(7, nan), 7, 3, 2), ProtocolError);

    try {
        decode_response(encode_error(7, "model not loaded"), 7, 3, 2);
        FAIL("expected an exception");
    } catch (const ProtocolError&) {
        FAIL("error replies are not protocol violations");
    } catch (const GuidanceUnavailable& e) {
        CHECK(std::string(e.what()).find("model not loaded") != std::string::npos);
    }
}

TEST_CASE("server helper answers malformed lines with errors") {
    auto echo = [](const WireRequest& r) { return r.z_t; };
    CHECK(is_error_reply(handle_wire_line("{broken", echo), std::nullopt));
    CHECK(is_error_reply(handle_wire_line(R"({"v":2,"id":3})", echo), 3));
    CHECK(is_error_reply(handle_wire_line("", echo), std::nullopt));
    auto throws = [](const WireRequest&) -> Image { throw std::runtime_error("boom"); };
    std::mt19937_64 rng(6);
    const Image z = f32_image(2, 2, rng);
    const std::string req = encode_request(11, NoiseQuery{z, 1, 0.5, nullptr, std::string("p")});
    CHECK(is_error_reply(handle_wire_line(req, throws), 11));
    const Image back = decode_response(handle_wire_line(req, echo), 11, 2, 2);
    CHECK((back.pixels == z.pixels).all());
}

TEST_CASE("in-process fake oracle matches the builtin oracle") {
    std::mt19937_64 rng(7);
    const Image target = f32_image(8, 5, rng);
    auto builtin = builtin_target_oracle(target);
    auto fake = std::make_unique<FunctionChannel>([&](const std::string& line) {
        return handle_wire_line(line, [&](const WireRequest& r) { return point_mass_noise(r.z_t, target, r.alpha_bar); });
    });
    ExternalOracle remote(std::move(fake));
    std::uniform_real_distribution<Scalar> u(0.01, 0.99);
    const std::string prompt = "p";
    Scalar worst = 0;
    for (int n = 0; n < 100; ++n) {
        const Image z = f32_image(8, 5, rng);
        const NoiseQuery q{z, n, Scalar(float(u(rng))), nullptr, prompt};
        // Replies travel as f32, so the remote answer is the builtin one rounded once.
        const auto local = builtin->predict_noise(q).pixels.cast<float>().cast<Scalar>();
        worst = std::max(worst, (remote.predict_noise(q).pixels - local).abs().maxCoeff());
    }
    CHECK(worst == 0.0);
    CHECK(remote.requests_sent() == 100);
}

TEST_CASE("external oracle surfaces failures as unavailable guidance") {
    std::mt19937_64 rng(8);
    const Image z = f32_image(2, 2, rng);
    const std::string prompt = "p";
    const NoiseQuery q{z, 1, 0.5, nullptr, prompt};

    ExternalOracle wrong_id(std::make_unique<FunctionChannel>([&](const std::string&) { return encode_response(99, z); }));
    CHECK_THROWS_AS(wrong_id.predict_noise(q), ProtocolError);
    ExternalOracle junk(std::make_unique<FunctionChannel>([](const std::string&) { return std::string("%%%"); }));
    CHECK_THROWS_AS(junk.predict_noise(q), ProtocolError);
}

TEST_CASE("loopback tcp transport") {
    std::mt19937_64 rng(9);
    const Image target = f32_image(4, 4, rng);
    LoopbackServer server([&](const std::string& line) {
        return handle_wire_line(line, [&](const WireRequest& r) { return point_mass_noise(r.z_t, target, r.alpha_bar); });
    });
    CHECK(server.port() > 0);
    auto remote = external_oracle("tcp://127.0.0.1:" + std::to_string(server.port()), std::chrono::milliseconds(5000));
    auto builtin = builtin_target_oracle(target);
    const std::string prompt = "p";
    for (int n = 0; n < 5; ++n) {
        const Image z = f32_image(4, 4, rng);
        const NoiseQuery q{z, n, 0.25, nullptr, prompt};
        CHECK((remote->predict_noise(q).pixels - builtin->predict_noise(q).pixels).abs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("process transport and endpoint parsing") {
    std::mt19937_64 rng(10);
    const Image z = f32_image(2, 2, rng);
    const std::string prompt = "p";
    const NoiseQuery q{z, 1, 0.5, nullptr, prompt};
    auto failing = external_oracle(R"(exec:read line; echo '{"v":1,"id":1,"error":"adapter not implemented"}')",
                                   std::chrono::milliseconds(5000));
    CHECK_THROWS_AS(failing->predict_noise(q), GuidanceUnavailable);
    auto silent = external_oracle("exec:sleep 5", std::chrono::milliseconds(200));
    CHECK_THROWS_AS(silent->predict_noise(q), GuidanceUnavailable);
    auto closed = external_oracle("exec:true", std::chrono::milliseconds(2000));
    CHECK_THROWS_AS(closed->predict_noise(q), GuidanceUnavailable);

    CHECK_THROWS_AS(external_oracle("udp://x:1"), InvalidInput);
    CHECK_THROWS_AS(external_oracle("tcp://localhost"), InvalidInput);
    CHECK_THROWS_AS(external_oracle("tcp://localhost:notaport"), InvalidInput);
}
