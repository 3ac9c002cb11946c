#pragma once

#include <span>
#include <vector>

#include "geomae/rng.hpp"
#include "geomae/tensor.hpp"

namespace geomae {

/// Token-grid extents. Canonical flat token index is
/// l = t * gh * gw + i * gw + j.
struct GridDims {
  Index t = 1, gh = 1, gw = 1;
  Index tokens() const { return t * gh * gw; }
  bool operator==(const GridDims&) const = default;
};

/// Per-axis channel allocation of a factorized 3D encoding, dt + dh + dw = D.
struct SplitDims {
  Index dt, dh, dw;
  Index total() const { return dt + dh + dw; }
  bool operator==(const SplitDims&) const = default;
};

struct Date {
  int year = 0;
  int doy = 1;  // day of year, 1..366
  bool operator==(const Date&) const = default;
};

struct GeoTemporalMetadata {
  double lat = 0.0;   // degrees, [-90, 90]
  double lon = 0.0;   // degrees, [-180, 180]
  std::vector<Date> dates;  // one per timestamp
};

struct MetadataBiasParams {
  double w_time = 1.0;
  double w_loc = 1.0;
  double drop_prob = 0.1;
};

struct PosTable3D {
  Tensor values;  // [L, D], rows in canonical order
  GridDims dims;
  SplitDims split;
};

struct DropFlags {
  bool drop_time = false;
  bool drop_loc = false;
};

/// Sinusoidal table [N, dim] for arbitrary real positions: frequencies
/// omega_k = 10000^(-2k/dim), first dim/2 channels sin(p*omega_k), second
/// half cos(p*omega_k). dim must be even and >= 2.
Tensor sincos_1d(std::span<const double> positions, Index dim);
Tensor sincos_1d(double position, Index dim);

/// Default split for a factorized 3D table: the temporal share is the even
/// number nearest D/4, bumped so the two equal spatial shares stay even.
SplitDims default_split(Index dim);

PosTable3D sincos_3d(GridDims dims, Index dim);
PosTable3D sincos_3d(GridDims dims, Index dim, SplitDims split);

/// Geolocation encoding: sincos_1d(lat, D/2) ++ sincos_1d(lon, D/2) on the
/// raw degree values. D must be divisible by 4.
Tensor encode_location(double lat, double lon, Index dim);

/// Acquisition-date encoding: sincos_1d(year, D/2) ++ sincos_1d(doy, D/2).
Tensor encode_date(Date date, Index dim);

/// Additive bias rows [L, D] for one sample: row l receives
/// w_time * encode_date(dates[t(l)]) + w_loc * encode_location(lat, lon),
/// with either term omitted when its drop flag is set.
Tensor metadata_bias_rows(const GeoTemporalMetadata& meta, GridDims dims, Index dim,
                          const MetadataBiasParams& params, bool drop_time, bool drop_loc);

/// tokens [B, L, D] with every sample sharing `meta`. Dropped terms are
/// omitted rather than added as zeros, so both-dropped output is the input.
Tensor apply_metadata_bias(const Tensor& tokens, GridDims dims, const GeoTemporalMetadata& meta,
                           const MetadataBiasParams& params, bool drop_time, bool drop_loc);

/// Two independent Bernoulli(drop_prob) draws, time flag first.
DropFlags sample_drop_flags(double drop_prob, Rng& rng);
DropFlags sample_drop_flags(double drop_prob, std::uint64_t seed);

}  // namespace geomae
