#pragma once

#include "slod/mesh.hpp"

#include <filesystem>
#include <vector>

namespace slod {

/// Piecewise-constant diffusion coefficient, one value per fine element
/// (row-major, bottom row first).
struct CoefficientField {
    int fine_divisions = 0;
    std::vector<double> values;
    double beta = 0.0;       ///< max value
    double kappa_min = 0.0;  ///< min value

    double at(int ex, int ey) const { return values[static_cast<std::size_t>(ey) * fine_divisions + ex]; }
};

/// Builds a field from raw values and fills in the min/max metadata.
CoefficientField make_field(int fine_divisions, std::vector<double> values);

CoefficientField constant_field(int fine_divisions, double c);
inline CoefficientField constant_field(const MeshHierarchy& mesh, double c) {
    return constant_field(mesh.fine_divisions(), c);
}

/// kappa(x) = A(x1, x2) + A(x2, x1) with A = beta/2 on the two vertical
/// strips [8/32, 9/32] and [10/32, 11/32] (for x2 in [1/32, 31/32]) and 1
/// elsewhere. The fine grid must resolve the 1/32 lattice.
CoefficientField four_channels(int fine_divisions, double beta);
inline CoefficientField four_channels(const MeshHierarchy& mesh, double beta) {
    return four_channels(mesh.fine_divisions(), beta);
}

/// 0/1 mask over the fine elements; row 0 of the file is the top of the domain.
struct RasterMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  ///< row-major, top row first, as stored in the file
};

/// Reads a plain-text 0/1 grid (one row per line) or a PGM image (P2/P5,
/// nonzero pixel = set).
RasterMask read_raster(const std::filesystem::path& path);
void write_raster(const std::filesystem::path& path, const RasterMask& mask);

/// kappa = beta where the mask is set, 1 elsewhere.
CoefficientField from_raster(int fine_divisions, const std::filesystem::path& path, double beta);
CoefficientField from_mask(int fine_divisions, const RasterMask& mask, double high);
/// Mask of the elements where the field equals its max (for two-valued fields).
RasterMask mask_of(const CoefficientField& field);

/// Irregular channel mask generated procedurally from a seed (a smoothed
/// random walk of several thick channels), for examples needing a
/// non-axis-aligned geometry.
RasterMask irregular_channels_mask(int fine_divisions, std::uint64_t seed, int channel_count = 4);

/// Piecewise-constant right-hand side, one value per fine element.
struct SourceField {
    int fine_divisions = 0;
    std::vector<double> values;
};

SourceField constant_source(int fine_divisions, double c);
/// f = 0 on [0, 1/2) x [0, 1], 1 on [1/2, 1] x [0, 1].
SourceField right_half_source(int fine_divisions);
SourceField source_from_raster(int fine_divisions, const std::filesystem::path& path);

/// ||f||_{L2} (exact for piecewise-constant data).
double l2_norm(const SourceField& f);
/// ||kappa^{-1/2} f||_{L2}.
double weighted_l2_norm(const SourceField& f, const CoefficientField& kappa);

} // namespace slod
