#include "slod/coefficient.hpp"

#include "slod/error.hpp"
#include "slod/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace slod {

CoefficientField make_field(int fine_divisions, std::vector<double> values) {
    SLOD_REQUIRE(fine_divisions > 0, "fine_divisions must be positive");
    SLOD_REQUIRE(values.size() == static_cast<std::size_t>(fine_divisions) * fine_divisions,
                 "coefficient size does not match the fine grid");
    CoefficientField f;
    f.fine_divisions = fine_divisions;
    for (double v : values) SLOD_REQUIRE(v > 0.0 && std::isfinite(v), "coefficient values must be positive");
    f.beta = *std::max_element(values.begin(), values.end());
    f.kappa_min = *std::min_element(values.begin(), values.end());
    f.values = std::move(values);
    return f;
}

CoefficientField constant_field(int fine_divisions, double c) {
    SLOD_REQUIRE(c > 0.0, "constant coefficient must be positive");
    return make_field(fine_divisions,
                      std::vector<double>(static_cast<std::size_t>(fine_divisions) * fine_divisions, c));
}

CoefficientField four_channels(int fine_divisions, double beta) {
    SLOD_REQUIRE(fine_divisions > 0 && fine_divisions % 32 == 0,
                 "four_channels needs a fine grid aligned with the 1/32 lattice");
    SLOD_REQUIRE(beta > 0.0, "beta must be positive");
    const int t = fine_divisions / 32;
    // a(c1, c2): value of A on the 1/32-cell (c1, c2).
    auto a = [&](int c1, int c2) {
        const bool strip = c1 == 8 || c1 == 10;
        const bool span = c2 >= 1 && c2 <= 30;
        return strip && span ? beta / 2.0 : 1.0;
    };
    std::vector<double> values(static_cast<std::size_t>(fine_divisions) * fine_divisions);
    for (int ey = 0; ey < fine_divisions; ++ey) {
        for (int ex = 0; ex < fine_divisions; ++ex) {
            const int c1 = ex / t;
            const int c2 = ey / t;
            values[static_cast<std::size_t>(ey) * fine_divisions + ex] = a(c1, c2) + a(c2, c1);
        }
    }
    return make_field(fine_divisions, std::move(values));
}

namespace {

std::string read_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string rest;
            std::getline(in, rest);
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

RasterMask read_pgm(std::istream& in, bool binary) {
    RasterMask mask;
    mask.width = std::stoi(read_token(in));
    mask.height = std::stoi(read_token(in));
    const int maxval = std::stoi(read_token(in));
    if (mask.width <= 0 || mask.height <= 0 || maxval <= 0)
        throw InvalidArgument("malformed PGM header");
    const std::size_t count = static_cast<std::size_t>(mask.width) * mask.height;
    mask.bits.resize(count);
    if (binary) {
        if (maxval > 255) throw InvalidArgument("only 8-bit binary PGM is supported");
        std::vector<char> buf(count);
        in.read(buf.data(), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count) throw InvalidArgument("truncated PGM data");
        for (std::size_t i = 0; i < count; ++i) mask.bits[i] = buf[i] != 0;
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::string tok = read_token(in);
            if (tok.empty()) throw InvalidArgument("truncated PGM data");
            mask.bits[i] = std::stoi(tok) != 0;
        }
    }
    return mask;
}

} // namespace

RasterMask read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open raster file " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() == 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2'))
        return read_pgm(in, magic[1] == '5');
    in.clear();
    in.seekg(0);

    RasterMask mask;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::uint8_t> row;
        for (char c : line) {
            if (c == '0' || c == '1') row.push_back(static_cast<std::uint8_t>(c == '1'));
            else if (!std::isspace(static_cast<unsigned char>(c)))
                throw InvalidArgument("unexpected character in raster file " + path.string());
        }
        if (row.empty()) continue;
        if (mask.width == 0) mask.width = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != mask.width) throw InvalidArgument("ragged raster rows");
        mask.bits.insert(mask.bits.end(), row.begin(), row.end());
        ++mask.height;
    }
    if (mask.height == 0) throw InvalidArgument("empty raster file " + path.string());
    return mask;
}

void write_raster(const std::filesystem::path& path, const RasterMask& mask) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write raster file " + path.string());
    for (int row = 0; row < mask.height; ++row) {
        for (int col = 0; col < mask.width; ++col)
            out << (mask.bits[static_cast<std::size_t>(row) * mask.width + col] ? '1' : '0');
        out << '\n';
    }
}

CoefficientField from_mask(int fine_divisions, const RasterMask& mask, double high) {
    SLOD_REQUIRE(mask.width == fine_divisions && mask.height == fine_divisions,
                 "raster is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                     " but the fine grid is " + std::to_string(fine_divisions) + "x" +
                     std::to_string(fine_divisions));
    SLOD_REQUIRE(high > 0.0, "beta must be positive");
    std::vector<double> values(static_cast<std::size_t>(fine_divisions) * fine_divisions);
    for (int ey = 0; ey < fine_divisions; ++ey) {
        const int row = fine_divisions - 1 - ey;
        for (int ex = 0; ex < fine_divisions; ++ex)
            values[static_cast<std::size_t>(ey) * fine_divisions + ex] =
                mask.bits[static_cast<std::size_t>(row) * fine_divisions + ex] ? high : 1.0;
    }
    return make_field(fine_divisions, std::move(values));
}

CoefficientField from_raster(int fine_divisions, const std::filesystem::path& path, double beta) {
    return from_mask(fine_divisions, read_raster(path), beta);
}

RasterMask mask_of(const CoefficientField& field) {
    const int nf = field.fine_divisions;
    RasterMask mask{nf, nf, std::vector<std::uint8_t>(static_cast<std::size_t>(nf) * nf)};
    const bool two_valued = field.beta != field.kappa_min;
    for (int ey = 0; ey < nf; ++ey)
        for (int ex = 0; ex < nf; ++ex)
            mask.bits[static_cast<std::size_t>(nf - 1 - ey) * nf + ex] =
                two_valued && field.at(ex, ey) == field.beta;
    return mask;
}

RasterMask irregular_channels_mask(int fine_divisions, std::uint64_t seed, int channel_count) {
    SLOD_REQUIRE(fine_divisions >= 16, "irregular mask needs at least 16 fine cells per side");
    const int nf = fine_divisions;
    RasterMask mask{nf, nf, std::vector<std::uint8_t>(static_cast<std::size_t>(nf) * nf)};
    const double width = std::max(1.0, nf / 96.0);
    for (int c = 0; c < channel_count; ++c) {
        KeyedRng rng{seed, static_cast<std::uint64_t>(c)};
        const bool horizontal = c % 2 == 0;
        double pos = nf * (0.15 + 0.7 * rng.uniform());
        double slope = 0.0;
        // Channels stay one coarse cell away from the boundary at both ends.
        const int start = nf / 32;
        for (int s = start; s < nf - start; ++s) {
            slope = 0.9 * slope + 0.35 * (rng.uniform() - 0.5);
            pos = std::clamp(pos + slope, 2.0 * width, nf - 2.0 * width);
            for (int w = static_cast<int>(std::floor(pos - width)); w <= static_cast<int>(std::ceil(pos + width)); ++w) {
                if (std::abs(w + 0.5 - pos) > width || w < 0 || w >= nf) continue;
                const int ex = horizontal ? s : w;
                const int ey = horizontal ? w : s;
                mask.bits[static_cast<std::size_t>(nf - 1 - ey) * nf + ex] = 1;
            }
        }
    }
    return mask;
}

SourceField constant_source(int fine_divisions, double c) {
    SLOD_REQUIRE(fine_divisions > 0, "fine_divisions must be positive");
    return {fine_divisions, std::vector<double>(static_cast<std::size_t>(fine_divisions) * fine_divisions, c)};
}

SourceField right_half_source(int fine_divisions) {
    SLOD_REQUIRE(fine_divisions > 0 && fine_divisions % 2 == 0,
                 "right_half_source needs an even number of fine cells");
    SourceField f = constant_source(fine_divisions, 0.0);
    for (int ey = 0; ey < fine_divisions; ++ey)
        for (int ex = fine_divisions / 2; ex < fine_divisions; ++ex)
            f.values[static_cast<std::size_t>(ey) * fine_divisions + ex] = 1.0;
    return f;
}

SourceField source_from_raster(int fine_divisions, const std::filesystem::path& path) {
    const RasterMask mask = read_raster(path);
    SLOD_REQUIRE(mask.width == fine_divisions && mask.height == fine_divisions,
                 "source raster does not match the fine grid");
    SourceField f = constant_source(fine_divisions, 0.0);
    for (int ey = 0; ey < fine_divisions; ++ey)
        for (int ex = 0; ex < fine_divisions; ++ex)
            f.values[static_cast<std::size_t>(ey) * fine_divisions + ex] =
                mask.bits[static_cast<std::size_t>(fine_divisions - 1 - ey) * fine_divisions + ex];
    return f;
}

double l2_norm(const SourceField& f) {
    const double area = 1.0 / (static_cast<double>(f.fine_divisions) * f.fine_divisions);
    double s = 0.0;
    for (double v : f.values) s += v * v * area;
    return std::sqrt(s);
}

double weighted_l2_norm(const SourceField& f, const CoefficientField& kappa) {
    SLOD_REQUIRE(f.fine_divisions == kappa.fine_divisions, "source and coefficient grids differ");
    const double area = 1.0 / (static_cast<double>(f.fine_divisions) * f.fine_divisions);
    double s = 0.0;
    for (std::size_t e = 0; e < f.values.size(); ++e) s += f.values[e] * f.values[e] / kappa.values[e] * area;
    return std::sqrt(s);
}

} // namespace slod
