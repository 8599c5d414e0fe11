#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fieldscribe/image.hpp"

namespace fieldscribe::gateway {

// Unit-norm vector in a named embedding space.
struct EmbeddingVector {
    std::string space_id;
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

// L2-normalizes `values`; throws DimMismatch on a zero or non-finite vector.
EmbeddingVector make_embedding(std::string space_id, const std::vector<double>& values);

// COCO-style uncompressed RLE: column-major, the first run counts zeros.
struct RleMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> counts;

    friend bool operator==(const RleMask&, const RleMask&) = default;
};

// Row-major binary mask.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
};

RleMask rle_encode(const BinaryMask& mask);
// Throws Precondition when the runs do not cover exactly width*height pixels.
BinaryMask rle_decode(const RleMask& rle);
BinaryMask rect_mask(int width, int height, const PixelRect& rect);

struct Detection {
    std::string label;
    double score = 0.0;
    Box box;
    std::optional<RleMask> mask;
};

struct PosToken {
    std::string text;
    std::string tag;
};

struct GatewayConfig {
    std::string base_url = "http://127.0.0.1:8765";
    std::chrono::milliseconds timeout{60'000};
    int max_concurrent_requests = 4;
    std::size_t caption_batch_cap = 16;
    std::string caption_model = "smolvlm2";
    std::string text_embed_model = "all-minilm-l6-v2";
    std::string joint_embed_model = "clip-vit-b-32";
    std::string detect_model = "grounding-dino";
    std::string segment_model = "sam";
    std::string pos_model = "spacy-en";
};

inline constexpr const char* kGatewayUrlEnv = "FIELDSCRIBE_GATEWAY_URL";

// Applies FIELDSCRIBE_GATEWAY_URL when set.
GatewayConfig apply_env_overrides(GatewayConfig config);

// One JSON request/response exchange with an inference backend.
class Transport {
public:
    virtual ~Transport() = default;
    virtual nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) = 0;
};

// JSON over HTTP. One retry on connection failure, none on HTTP error statuses.
class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::chrono::milliseconds timeout);
    nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) override;

    int attempts() const { return attempts_.load(); }

private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
    std::atomic<int> attempts_{0};
};

class GatewayClient {
public:
    GatewayClient(GatewayConfig config, std::shared_ptr<Transport> transport);

    const GatewayConfig& config() const { return config_; }

    std::string caption(const std::vector<std::string>& frames);
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts, const std::string& space);
    std::pair<std::vector<EmbeddingVector>, std::vector<EmbeddingVector>> embed_joint(
        const std::vector<std::string>& texts, const std::vector<std::string>& frames, const std::string& space);
    std::vector<Detection> detect(const std::string& frame, const std::vector<std::string>& prompts);
    std::vector<RleMask> segment(const std::string& frame, const std::vector<Box>& boxes);
    std::vector<Box> anonymize(const std::string& frame);
    std::vector<PosToken> pos_tags(const std::string& text);

private:
    nlohmann::json call(const std::string& endpoint, const nlohmann::json& body);

    GatewayConfig config_;
    std::shared_ptr<Transport> transport_;
    std::unique_ptr<std::counting_semaphore<>> admission_;
};

// ---------------------------------------------------------------------------
// Deterministic mock backend

inline constexpr std::uint64_t kMockSeed = 0x5EED;
inline constexpr std::size_t kMockDim = 128;
inline constexpr double kMockNoiseNorm = 0.05;

struct AuthoredDetection {
    std::string label;
    Box box;
    double score = 0.9;
};

struct FrameAnnotation {
    std::string group;
    std::vector<AuthoredDetection> detections;
    std::vector<Box> sensitive;  // faces, plates
};

// Authored ground truth the mock answers from, usually read from a session's
// mock_gateway.json. Frame keys are paths relative to `root`.
struct MockFixture {
    std::filesystem::path root;
    std::map<std::string, std::string> group_captions;
    std::map<std::string, FrameAnnotation> frames;

    static MockFixture load(const std::filesystem::path& session_dir);
    void save(const std::filesystem::path& file) const;

    // Relative key for a frame path as sent on the wire.
    std::string key_for(const std::string& frame) const;
    const FrameAnnotation* annotation(const std::string& frame) const;
};

inline constexpr const char* kMockFixtureFile = "mock_gateway.json";
inline constexpr const char* kMockDefaultCaption = "A scene with nothing remarkable in view.";

// Pure function of (endpoint, request, seed). Requests that violate the
// protocol or reference unreadable frames produce a MockReply with status 422.
class MockBackend {
public:
    struct Reply {
        int status = 200;
        nlohmann::json body;
    };

    explicit MockBackend(MockFixture fixture, std::uint64_t seed = kMockSeed);

    Reply handle(const std::string& endpoint, const nlohmann::json& request) const;

    const MockFixture& fixture() const { return fixture_; }

    // Deterministic unit vector for `text` in `space`.
    std::vector<double> text_vector(const std::string& space, const std::string& text) const;
    std::vector<double> image_vector(const std::string& space, const std::string& frame) const;
    std::string caption_for(const std::vector<std::string>& frames) const;

    // Concurrency instrumentation for the admission contract.
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }
    int peak_in_flight() const { return peak_.load(); }
    int calls() const { return calls_.load(); }
    void enter() const;
    void leave() const;

private:
    MockFixture fixture_;
    std::uint64_t seed_;
    std::chrono::milliseconds latency_{0};
    mutable std::atomic<int> in_flight_{0};
    mutable std::atomic<int> peak_{0};
    mutable std::atomic<int> calls_{0};
};

// In-process transport straight into a MockBackend.
class MockTransport : public Transport {
public:
    explicit MockTransport(std::shared_ptr<MockBackend> backend) : backend_(std::move(backend)) {}
    nlohmann::json post(const std::string& endpoint, const nlohmann::json& body) override;

private:
    std::shared_ptr<MockBackend> backend_;
};

// Serves a MockBackend over loopback HTTP on an ephemeral port.
class MockServer {
public:
    explicit MockServer(std::shared_ptr<MockBackend> backend);
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    std::string url() const;
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace fieldscribe::gateway
