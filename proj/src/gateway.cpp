#include "fieldscribe/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <unordered_map>

#include "fieldscribe/error.hpp"
#include "fieldscribe/session.hpp"

namespace fieldscribe::gateway {

using nlohmann::json;

EmbeddingVector make_embedding(std::string space_id, const std::vector<double>& values) {
    double norm_sq = 0.0;
    for (double v : values) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    if (values.empty() || !std::isfinite(norm) || norm == 0.0) {
        throw Error(Errc::DimMismatch, "embedding in space " + space_id + " is empty, zero or non-finite");
    }
    EmbeddingVector out;
    out.space_id = std::move(space_id);
    out.values.reserve(values.size());
    for (double v : values) out.values.push_back(static_cast<float>(v / norm));
    return out;
}

RleMask rle_encode(const BinaryMask& mask) {
    RleMask rle{mask.width, mask.height, {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int x = 0; x < mask.width; ++x) {
        for (int y = 0; y < mask.height; ++y) {
            const std::uint8_t v = mask.at(x, y) ? 1 : 0;
            if (v != current) {
                rle.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    rle.counts.push_back(run);
    return rle;
}

BinaryMask rle_decode(const RleMask& rle) {
    if (rle.width < 0 || rle.height < 0) throw Error(Errc::Precondition, "negative mask size");
    BinaryMask mask{rle.width, rle.height,
                    std::vector<std::uint8_t>(static_cast<std::size_t>(rle.width) * rle.height, 0)};
    const std::uint64_t total = static_cast<std::uint64_t>(rle.width) * static_cast<std::uint64_t>(rle.height);
    std::uint64_t pos = 0;
    std::uint8_t value = 0;
    for (std::uint32_t run : rle.counts) {
        if (pos + run > total) throw Error(Errc::Precondition, "RLE runs exceed mask size");
        for (std::uint32_t i = 0; i < run; ++i, ++pos) {
            if (value) {
                const auto x = static_cast<int>(pos / static_cast<std::uint64_t>(rle.height));
                const auto y = static_cast<int>(pos % static_cast<std::uint64_t>(rle.height));
                mask.bits[static_cast<std::size_t>(y) * rle.width + x] = 1;
            }
        }
        value ^= 1;
    }
    if (pos != total) throw Error(Errc::Precondition, "RLE runs do not cover the mask");
    return mask;
}

BinaryMask rect_mask(int width, int height, const PixelRect& rect) {
    BinaryMask mask{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
    for (int y = std::max(rect.y0, 0); y < std::min(rect.y1, height); ++y) {
        for (int x = std::max(rect.x0, 0); x < std::min(rect.x1, width); ++x) {
            mask.bits[static_cast<std::size_t>(y) * width + x] = 1;
        }
    }
    return mask;
}

GatewayConfig apply_env_overrides(GatewayConfig config) {
    if (const char* url = std::getenv(kGatewayUrlEnv); url && *url) config.base_url = url;
    return config;
}

namespace {

json boxes_to_json(const std::vector<Box>& boxes) {
    json out = json::array();
    for (const Box& b : boxes) out.push_back({b.x1, b.y1, b.x2, b.y2});
    return out;
}

Box box_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4 || !std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number(); })) {
        throw Error(Errc::GatewayError, where + ": box must be four numbers");
    }
    Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid()) throw Error(Errc::GatewayError, where + ": box is not normalized xyxy");
    return b;
}

const json& field(const json& reply, const char* key, const char* endpoint) {
    if (!reply.is_object() || !reply.contains(key)) {
        throw Error(Errc::GatewayError, std::string(endpoint) + " reply lacks '" + key + "'");
    }
    return reply.at(key);
}

std::vector<EmbeddingVector> parse_vectors(const json& vectors, std::size_t dim, std::size_t expected,
                                           const std::string& space, const char* endpoint) {
    if (!vectors.is_array() || vectors.size() != expected) {
        throw Error(Errc::DimMismatch, std::string(endpoint) + " returned " +
                                           std::to_string(vectors.is_array() ? vectors.size() : 0) +
                                           " vectors, expected " + std::to_string(expected));
    }
    std::vector<EmbeddingVector> out;
    out.reserve(expected);
    for (const json& v : vectors) {
        if (!v.is_array() || v.size() != dim) {
            throw Error(Errc::DimMismatch, std::string(endpoint) + " vector length differs from dim " +
                                               std::to_string(dim));
        }
        std::vector<double> values;
        values.reserve(dim);
        for (const json& x : v) {
            if (!x.is_number()) throw Error(Errc::GatewayError, std::string(endpoint) + " non-numeric component");
            values.push_back(x.get<double>());
        }
        out.push_back(make_embedding(space, values));
    }
    return out;
}

std::size_t reply_dim(const json& reply, const char* endpoint) {
    const json& dim = field(reply, "dim", endpoint);
    if (!dim.is_number_unsigned() || dim.get<std::size_t>() == 0) {
        throw Error(Errc::DimMismatch, std::string(endpoint) + " reply has invalid dim");
    }
    return dim.get<std::size_t>();
}

}  // namespace

GatewayClient::GatewayClient(GatewayConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    if (config_.max_concurrent_requests < 1) {
        throw Error(Errc::Precondition, "max_concurrent_requests must be at least 1");
    }
    if (!transport_) throw Error(Errc::Precondition, "gateway client needs a transport");
    admission_ = std::make_unique<std::counting_semaphore<>>(config_.max_concurrent_requests);
}

json GatewayClient::call(const std::string& endpoint, const json& body) {
    admission_->acquire();
    struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
    } release{admission_.get()};
    return transport_->post(endpoint, body);
}

std::string GatewayClient::caption(const std::vector<std::string>& frames) {
    if (frames.empty() || frames.size() > config_.caption_batch_cap) {
        throw Error(Errc::Precondition, "caption needs between 1 and " + std::to_string(config_.caption_batch_cap) +
                                            " frames, got " + std::to_string(frames.size()));
    }
    const json reply = call("/v1/caption", {{"model", config_.caption_model}, {"frames", frames}});
    const json& text = field(reply, "text", "/v1/caption");
    if (!text.is_string()) throw Error(Errc::GatewayError, "/v1/caption text is not a string");
    std::string caption = session::trim(text.get<std::string>());
    // Single paragraph: fold internal line breaks.
    std::replace_if(caption.begin(), caption.end(), [](char c) { return c == '\n' || c == '\r'; }, ' ');
    if (caption.empty()) throw Error(Errc::EmptyCaption, "gateway returned an empty caption");
    return caption;
}

std::vector<EmbeddingVector> GatewayClient::embed_texts(const std::vector<std::string>& texts,
                                                        const std::string& space) {
    if (texts.empty()) throw Error(Errc::Precondition, "embed_texts needs at least one text");
    std::vector<std::string> unique;
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::size_t> mapping;
    mapping.reserve(texts.size());
    for (const std::string& t : texts) {
        if (session::trim(t).empty()) throw Error(Errc::Precondition, "embed_texts got a blank text");
        auto [it, inserted] = slot.try_emplace(t, unique.size());
        if (inserted) unique.push_back(t);
        mapping.push_back(it->second);
    }
    const json reply = call("/v1/embed_text", {{"model", space}, {"texts", unique}});
    const std::size_t dim = reply_dim(reply, "/v1/embed_text");
    const auto vectors = parse_vectors(field(reply, "vectors", "/v1/embed_text"), dim, unique.size(), space,
                                       "/v1/embed_text");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t m : mapping) out.push_back(vectors[m]);
    return out;
}

std::pair<std::vector<EmbeddingVector>, std::vector<EmbeddingVector>> GatewayClient::embed_joint(
    const std::vector<std::string>& texts, const std::vector<std::string>& frames, const std::string& space) {
    if (texts.empty() || frames.empty()) {
        throw Error(Errc::Precondition, "embed_joint needs at least one text and one frame");
    }
    const json reply = call("/v1/embed_joint", {{"model", space}, {"texts", texts}, {"frames", frames}});
    const std::size_t dim = reply_dim(reply, "/v1/embed_joint");
    auto text_vectors =
        parse_vectors(field(reply, "text_vectors", "/v1/embed_joint"), dim, texts.size(), space, "/v1/embed_joint");
    auto image_vectors =
        parse_vectors(field(reply, "image_vectors", "/v1/embed_joint"), dim, frames.size(), space, "/v1/embed_joint");
    return {std::move(text_vectors), std::move(image_vectors)};
}

std::vector<Detection> GatewayClient::detect(const std::string& frame, const std::vector<std::string>& prompts) {
    if (prompts.empty()) throw Error(Errc::Precondition, "detect needs at least one prompt");
    std::set<std::string> seen;
    for (const std::string& p : prompts) {
        if (p.empty() || std::any_of(p.begin(), p.end(), [](unsigned char c) { return std::isupper(c); })) {
            throw Error(Errc::Precondition, "detect prompt '" + p + "' must be non-empty lower case");
        }
        if (!seen.insert(p).second) throw Error(Errc::Precondition, "duplicate detect prompt '" + p + "'");
    }
    const json reply = call("/v1/detect", {{"model", config_.detect_model}, {"frame", frame}, {"prompts", prompts}});
    const json& list = field(reply, "detections", "/v1/detect");
    if (!list.is_array()) throw Error(Errc::GatewayError, "/v1/detect detections is not an array");
    std::vector<Detection> out;
    for (const json& d : list) {
        Detection det;
        if (!d.is_object() || !d.contains("label") || !d["label"].is_string() || !d.contains("score") ||
            !d["score"].is_number() || !d.contains("box")) {
            throw Error(Errc::GatewayError, "/v1/detect malformed detection");
        }
        det.label = d["label"].get<std::string>();
        det.score = d["score"].get<double>();
        det.box = box_from_json(d["box"], "/v1/detect");
        if (!seen.contains(det.label)) throw Error(Errc::GatewayError, "/v1/detect label not among prompts: " + det.label);
        if (!(det.score >= 0.0 && det.score <= 1.0)) throw Error(Errc::GatewayError, "/v1/detect score out of [0,1]");
        out.push_back(std::move(det));
    }
    std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return out;
}

std::vector<RleMask> GatewayClient::segment(const std::string& frame, const std::vector<Box>& boxes) {
    for (const Box& b : boxes) {
        if (!b.valid()) throw Error(Errc::Precondition, "segment box is not normalized xyxy");
    }
    if (boxes.empty()) return {};
    const json reply =
        call("/v1/segment", {{"model", config_.segment_model}, {"frame", frame}, {"boxes", boxes_to_json(boxes)}});
    const json& w = field(reply, "width", "/v1/segment");
    const json& h = field(reply, "height", "/v1/segment");
    const json& masks = field(reply, "masks", "/v1/segment");
    if (!w.is_number_integer() || !h.is_number_integer() || !masks.is_array() || masks.size() != boxes.size()) {
        throw Error(Errc::GatewayError, "/v1/segment reply does not match the request");
    }
    std::vector<RleMask> out;
    for (const json& m : masks) {
        RleMask rle{w.get<int>(), h.get<int>(), {}};
        const json& counts = m.is_object() && m.contains("rle_counts") ? m["rle_counts"] : m;
        if (!counts.is_array()) throw Error(Errc::GatewayError, "/v1/segment mask is not an RLE count list");
        for (const json& c : counts) {
            if (!c.is_number_unsigned()) throw Error(Errc::GatewayError, "/v1/segment negative RLE count");
            rle.counts.push_back(c.get<std::uint32_t>());
        }
        try {
            rle_decode(rle);
        } catch (const Error& e) {
            throw Error(Errc::GatewayError, std::string("/v1/segment ") + e.what());
        }
        out.push_back(std::move(rle));
    }
    return out;
}

std::vector<Box> GatewayClient::anonymize(const std::string& frame) {
    const json reply = call("/v1/anonymize", {{"frame", frame}});
    const json& list = field(reply, "boxes", "/v1/anonymize");
    if (!list.is_array()) throw Error(Errc::GatewayError, "/v1/anonymize boxes is not an array");
    std::vector<Box> out;
    for (const json& b : list) out.push_back(box_from_json(b, "/v1/anonymize"));
    return out;
}

std::vector<PosToken> GatewayClient::pos_tags(const std::string& text) {
    const json reply = call("/v1/pos", {{"model", config_.pos_model}, {"text", text}});
    const json& tokens = field(reply, "tokens", "/v1/pos");
    if (!tokens.is_array()) throw Error(Errc::GatewayError, "/v1/pos tokens is not an array");
    std::vector<PosToken> out;
    for (const json& t : tokens) {
        if (!t.is_object() || !t.contains("text") || !t["text"].is_string() || !t.contains("tag") ||
            !t["tag"].is_string()) {
            throw Error(Errc::GatewayError, "/v1/pos malformed token");
        }
        out.push_back({t["text"].get<std::string>(), t["tag"].get<std::string>()});
    }
    return out;
}

}  // namespace fieldscribe::gateway
