#include "psl/pnm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "psl/errors.hpp"

namespace psl {

namespace {

struct PnmHeader {
    bool rgb = false;
    int width = 0;
    int height = 0;
};

/// Header tokens are separated by whitespace; '#' starts a comment running
/// to end of line. A single whitespace byte separates the header from the
/// raw payload.
PnmHeader read_header(std::istream& in, const std::string& path) {
    auto next_token = [&](const char* what) {
        std::string tok;
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        if (tok.empty()) throw IoError("truncated PNM header (" + std::string(what) + "): " + path);
        return tok;
    };

    const std::string magic = next_token("magic");
    if (magic != "P5" && magic != "P6") throw IoError("bad PNM magic '" + magic + "': " + path);
    PnmHeader h;
    h.rgb = magic == "P6";
    auto parse_int = [&](const char* what) {
        const std::string tok = next_token(what);
        try {
            size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw IoError("bad PNM " + std::string(what) + " '" + tok + "': " + path);
        }
    };
    h.width = parse_int("width");
    h.height = parse_int("height");
    const std::string maxval = next_token("maxval");
    if (maxval != "255") throw IoError("unsupported PNM maxval '" + maxval + "' (expected 255): " + path);
    return h;
}

std::vector<unsigned char> read_payload(std::istream& in, size_t n, const std::string& path) {
    std::vector<unsigned char> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw IoError("truncated PNM payload: " + path);
    return bytes;
}

void write_file(const std::string& path, const std::string& header,
                const std::vector<unsigned char>& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write PNM file: " + path);
    out << header;
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("short write on PNM file: " + path);
}

unsigned char to_byte(double v) {
    const double scaled = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(std::min(255.0, std::max(0.0, scaled)));
}

}  // namespace

Tensor read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    const PnmHeader h = read_header(in, path);
    const int channels = h.rgb ? 3 : 1;
    const size_t n = static_cast<size_t>(h.width) * h.height * channels;
    const auto bytes = read_payload(in, n, path);

    std::vector<double> data(n);
    // interleaved rows -> planar CxHxW
    const size_t hw = static_cast<size_t>(h.width) * h.height;
    for (size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < channels; ++c) {
            data[static_cast<size_t>(c) * hw + p] = bytes[p * channels + c] / 255.0;
        }
    }
    return Tensor::from_data({channels, h.height, h.width}, std::move(data));
}

void write_pnm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
        throw std::invalid_argument("write_pnm: expected CxHxW with 1 or 3 channels, got " +
                                    shape_str(image.shape()));
    }
    const int channels = image.dim(0), h = image.dim(1), w = image.dim(2);
    const size_t hw = static_cast<size_t>(h) * w;
    std::vector<unsigned char> payload(hw * channels);
    const auto data = image.data();
    for (size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < channels; ++c) {
            payload[p * channels + c] = to_byte(data[static_cast<size_t>(c) * hw + p]);
        }
    }
    const std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    write_file(path, header, payload);
}

Tensor read_mask_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mask: " + path);
    const PnmHeader h = read_header(in, path);
    if (h.rgb) throw IoError("mask must be grayscale P5: " + path);
    const size_t n = static_cast<size_t>(h.width) * h.height;
    const auto bytes = read_payload(in, n, path);
    std::vector<double> data(n);
    for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(bytes[i]);
    return Tensor::from_data({h.height, h.width}, std::move(data));
}

void write_mask_pgm(const std::string& path, const Tensor& mask) {
    if (mask.rank() != 2) {
        throw std::invalid_argument("write_mask_pgm: expected HxW mask, got " + shape_str(mask.shape()));
    }
    const int h = mask.dim(0), w = mask.dim(1);
    std::vector<unsigned char> payload(static_cast<size_t>(h) * w);
    const auto data = mask.data();
    for (size_t i = 0; i < payload.size(); ++i) {
        const double v = data[i];
        if (v < 0.0 || v > 255.0 || v != std::floor(v)) {
            throw std::invalid_argument("write_mask_pgm: mask values must be integers in [0,255]");
        }
        payload[i] = static_cast<unsigned char>(v);
    }
    const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    write_file(path, header, payload);
}

}  // namespace psl
