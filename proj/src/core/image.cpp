/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/image.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace matedit {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::Io: return "io";
        case ErrorCode::EmptyInput: return "empty-input";
        case ErrorCode::EmptyRegion: return "empty-region";
        case ErrorCode::UnknownLabel: return "unknown-label";
        case ErrorCode::BackFace: return "back-face";
        case ErrorCode::DegenerateLobe: return "degenerate-lobe";
        case ErrorCode::Divergence: return "divergence";
        case ErrorCode::ZeroCoverage: return "zero-coverage";
        case ErrorCode::EmptyScene: return "empty-scene";
        case ErrorCode::SegmenterUnavailable: return "segmenter-unavailable";
        case ErrorCode::ContractViolation: return "contract-violation";
        case ErrorCode::ResolutionMismatch: return "resolution-mismatch";
        case ErrorCode::Busy: return "busy";
        case ErrorCode::Runtime: return "runtime";
    }
    return "unknown";
}

size_t popcount(const Mask& m) {
    size_t n = 0;
    for (auto v : m.values()) n += v != 0;
    return n;
}

namespace {

template <class Op>
Mask combine(const Mask& a, const Mask& b, Op op) {
    if (!a.same_shape(b)) fail(ErrorCode::ResolutionMismatch, "mask shapes differ");
    Mask out(a.width(), a.height());
    for (size_t i = 0; i < a.pixel_count(); ++i) out[i] = op(a[i] != 0, b[i] != 0) ? 1 : 0;
    return out;
}

}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
    return combine(a, b, [](bool x, bool y) { return x && y; });
}
Mask mask_or(const Mask& a, const Mask& b) {
    return combine(a, b, [](bool x, bool y) { return x || y; });
}
Mask mask_minus(const Mask& a, const Mask& b) {
    return combine(a, b, [](bool x, bool y) { return x && !y; });
}
Mask mask_not(const Mask& a) {
    Mask out(a.width(), a.height());
    for (size_t i = 0; i < a.pixel_count(); ++i) out[i] = a[i] ? 0 : 1;
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    const size_t inter = popcount(mask_and(a, b));
    const size_t uni = popcount(mask_or(a, b));
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask threshold(const Image& img, double level, int channel) {
    Mask out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) out.at(x, y) = img.at(x, y, channel) >= level ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

struct PnmHeader {
    std::string magic;
    int width = 0, height = 0;
    double scale = 0;  // maxval for PNM, scale for PFM
    size_t data_offset = 0;
};

PnmHeader parse_header(const std::string& bytes) {
    PnmHeader h;
    size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        const size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) fail(ErrorCode::Io, "truncated image header");
        return bytes.substr(start, pos - start);
    };
    h.magic = next_token();
    try {
        h.width = std::stoi(next_token());
        h.height = std::stoi(next_token());
        h.scale = std::stod(next_token());
    } catch (const std::logic_error&) {
        fail(ErrorCode::Io, "malformed image header");
    }
    if (h.width <= 0 || h.height <= 0) fail(ErrorCode::Io, "bad image dimensions");
    h.data_offset = pos + 1;  // single whitespace after last header token
    return h;
}

}  // namespace

std::string encode_pfm(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3)
        fail(ErrorCode::InvalidArgument, "PFM supports 1 or 3 channels");
    std::string out = (img.channels() == 3 ? "PF\n" : "Pf\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n-1.0\n";
    const size_t header = out.size();
    out.resize(header + img.values().size() * 4);
    char* dst = out.data() + header;
    // PFM stores the bottom row first
    for (int y = img.height() - 1; y >= 0; --y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) {
                float f = static_cast<float>(img.at(x, y, c));
                std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
                if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
                std::memcpy(dst, &bits, 4);
                dst += 4;
            }
    return out;
}

Image decode_pfm(const std::string& bytes) {
    const PnmHeader h = parse_header(bytes);
    int channels = 0;
    if (h.magic == "PF") channels = 3;
    else if (h.magic == "Pf") channels = 1;
    else fail(ErrorCode::Io, "not a PFM image");
    const bool little = h.scale < 0;
    const size_t need = static_cast<size_t>(h.width) * h.height * channels * 4;
    if (bytes.size() < h.data_offset + need) fail(ErrorCode::Io, "truncated PFM data");
    Image img(h.width, h.height, channels);
    const char* src = bytes.data() + h.data_offset;
    const bool swap = little != (std::endian::native == std::endian::little);
    for (int y = h.height - 1; y >= 0; --y)
        for (int x = 0; x < h.width; ++x)
            for (int c = 0; c < channels; ++c) {
                std::uint32_t bits;
                std::memcpy(&bits, src, 4);
                src += 4;
                if (swap) bits = __builtin_bswap32(bits);
                img.at(x, y, c) = std::bit_cast<float>(bits);
            }
    return img;
}

std::string encode_pnm8(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3)
        fail(ErrorCode::InvalidArgument, "PNM supports 1 or 3 channels");
    std::string out = (img.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(img.width()) + " " +
                      std::to_string(img.height()) + "\n255\n";
    out.reserve(out.size() + img.values().size());
    for (double v : img.values())
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    return out;
}

std::string encode_pgm_mask(const Mask& m) {
    std::string out = "P5\n" + std::to_string(m.width()) + " " + std::to_string(m.height()) + "\n255\n";
    for (auto v : m.values()) out.push_back(static_cast<char>(v ? 255 : 0));
    return out;
}

namespace {

Image decode_pnm(const std::string& bytes) {
    const PnmHeader h = parse_header(bytes);
    int channels = 0;
    if (h.magic == "P6") channels = 3;
    else if (h.magic == "P5") channels = 1;
    else fail(ErrorCode::Io, "unsupported PNM variant " + h.magic);
    const int maxval = static_cast<int>(h.scale);
    if (maxval <= 0 || maxval > 65535) fail(ErrorCode::Io, "bad PNM maxval");
    const int bps = maxval > 255 ? 2 : 1;
    const size_t need = static_cast<size_t>(h.width) * h.height * channels * bps;
    if (bytes.size() < h.data_offset + need) fail(ErrorCode::Io, "truncated PNM data");
    Image img(h.width, h.height, channels);
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
    for (size_t i = 0; i < img.values().size(); ++i) {
        const unsigned v = bps == 2 ? (unsigned(src[2 * i]) << 8) | src[2 * i + 1] : src[i];
        img[i] = static_cast<double>(v) / maxval;
    }
    return img;
}

}  // namespace

Mask decode_pgm_mask(const std::string& bytes) {
    const Image img = decode_pnm(bytes);
    Mask m(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) m.at(x, y) = img.at(x, y, 0) > 0.0 ? 1 : 0;
    return m;
}

void write_pfm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pfm(img)); }
Image read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file(path)); }
void write_ppm8(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pnm8(img)); }
Image read_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }
void write_mask(const std::filesystem::path& path, const Mask& m) { write_file(path, encode_pgm_mask(m)); }
Mask read_mask(const std::filesystem::path& path) { return decode_pgm_mask(read_file(path)); }

void write_pgm16(const std::filesystem::path& path, const LabelImage& labels) {
    std::string out =
        "P5\n" + std::to_string(labels.width()) + " " + std::to_string(labels.height()) + "\n65535\n";
    for (auto v : labels.values()) {
        out.push_back(static_cast<char>(v >> 8));
        out.push_back(static_cast<char>(v & 0xFF));
    }
    write_file(path, out);
}

LabelImage read_pgm16(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const PnmHeader h = parse_header(bytes);
    if (h.magic != "P5" || h.scale != 65535) fail(ErrorCode::Io, "label image must be 16-bit PGM");
    const size_t need = static_cast<size_t>(h.width) * h.height * 2;
    if (bytes.size() < h.data_offset + need) fail(ErrorCode::Io, "truncated label image");
    LabelImage out(h.width, h.height);
    const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
    for (size_t i = 0; i < out.pixel_count(); ++i)
        out[i] = static_cast<std::uint16_t>((src[2 * i] << 8) | src[2 * i + 1]);
    return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
    const auto ext = path.extension().string();
    if (ext == ".pfm") write_pfm(path, img);
    else if (ext == ".ppm" || ext == ".pgm") write_ppm8(path, img);
    else fail(ErrorCode::InvalidArgument, "unsupported image extension '" + ext + "'");
}

Image read_image(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == 'F' || bytes[1] == 'f')) return decode_pfm(bytes);
    return decode_pnm(bytes);
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const unsigned v = (unsigned(static_cast<unsigned char>(bytes[i])) << 16) |
                           (unsigned(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i < bytes.size()) {
        unsigned v = unsigned(static_cast<unsigned char>(bytes[i])) << 16;
        if (i + 1 < bytes.size()) v |= unsigned(static_cast<unsigned char>(bytes[i + 1])) << 8;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::string base64_decode(std::string_view text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::string out;
    unsigned acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || std::isspace(static_cast<unsigned char>(c))) continue;
        const int v = value(c);
        if (v < 0) fail(ErrorCode::InvalidArgument, "invalid base64 input");
        acc = (acc << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

}  // namespace matedit
