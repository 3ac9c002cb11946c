#include "geomae/posenc.hpp"

#include <cmath>

namespace geomae {

Tensor sincos_1d(std::span<const double> positions, Index dim) {
  GEOMAE_CHECK(dim >= 2 && dim % 2 == 0, "sincos_1d: dim must be even and >= 2");
  const Index n = static_cast<Index>(positions.size());
  const Index half = dim / 2;
  Tensor out({n, dim});
  for (Index i = 0; i < n; ++i) {
    const double p = positions[static_cast<std::size_t>(i)];
    for (Index k = 0; k < half; ++k) {
      const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      out.at(i, k) = std::sin(p * omega);
      out.at(i, half + k) = std::cos(p * omega);
    }
  }
  return out;
}

Tensor sincos_1d(double position, Index dim) {
  return sincos_1d(std::span<const double>(&position, 1), dim);
}

SplitDims default_split(Index dim) {
  GEOMAE_CHECK(dim % 2 == 0 && dim >= 6, "default_split: dim must be even and >= 6");
  Index dt = 2 * static_cast<Index>(std::llround(static_cast<double>(dim) / 8.0));
  if ((dim - dt) % 4 != 0) dt += 2;
  if (dt < 2) dt = 2;
  const Index dh = (dim - dt) / 2;
  GEOMAE_CHECK(dh >= 2 && dh % 2 == 0, "default_split: no even split for dim " + std::to_string(dim));
  return {dt, dh, dh};
}

PosTable3D sincos_3d(GridDims dims, Index dim) { return sincos_3d(dims, dim, default_split(dim)); }

PosTable3D sincos_3d(GridDims dims, Index dim, SplitDims split) {
  GEOMAE_CHECK(dims.t >= 1 && dims.gh >= 1 && dims.gw >= 1, "sincos_3d: empty grid");
  GEOMAE_CHECK(split.total() == dim, "sincos_3d: split does not sum to dim");
  GEOMAE_CHECK(split.dt >= 2 && split.dt % 2 == 0 && split.dh >= 2 && split.dh % 2 == 0 &&
                   split.dw >= 2 && split.dw % 2 == 0,
               "sincos_3d: split parts must be even and >= 2");
  auto axis_positions = [](Index n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(i);
    return p;
  };
  const Tensor et = sincos_1d(axis_positions(dims.t), split.dt);
  const Tensor eh = sincos_1d(axis_positions(dims.gh), split.dh);
  const Tensor ew = sincos_1d(axis_positions(dims.gw), split.dw);

  PosTable3D table;
  table.dims = dims;
  table.split = split;
  table.values = Tensor({dims.tokens(), dim});
  Index l = 0;
  for (Index t = 0; t < dims.t; ++t)
    for (Index i = 0; i < dims.gh; ++i)
      for (Index j = 0; j < dims.gw; ++j, ++l) {
        Index c = 0;
        for (Index k = 0; k < split.dt; ++k) table.values.at(l, c++) = et.at(t, k);
        for (Index k = 0; k < split.dh; ++k) table.values.at(l, c++) = eh.at(i, k);
        for (Index k = 0; k < split.dw; ++k) table.values.at(l, c++) = ew.at(j, k);
      }
  return table;
}

Tensor encode_location(double lat, double lon, Index dim) {
  GEOMAE_CHECK(dim % 4 == 0 && dim >= 4, "encode_location: dim must be divisible by 4");
  GEOMAE_CHECK(lat >= -90.0 && lat <= 90.0, "encode_location: latitude out of range");
  GEOMAE_CHECK(lon >= -180.0 && lon <= 180.0, "encode_location: longitude out of range");
  const Tensor a = sincos_1d(lat, dim / 2);
  const Tensor b = sincos_1d(lon, dim / 2);
  Tensor out({dim});
  for (Index k = 0; k < dim / 2; ++k) out[k] = a[k];
  for (Index k = 0; k < dim / 2; ++k) out[dim / 2 + k] = b[k];
  return out;
}

Tensor encode_date(Date date, Index dim) {
  GEOMAE_CHECK(dim % 4 == 0 && dim >= 4, "encode_date: dim must be divisible by 4");
  GEOMAE_CHECK(date.doy >= 1 && date.doy <= 366, "encode_date: day-of-year out of range");
  const Tensor a = sincos_1d(static_cast<double>(date.year), dim / 2);
  const Tensor b = sincos_1d(static_cast<double>(date.doy), dim / 2);
  Tensor out({dim});
  for (Index k = 0; k < dim / 2; ++k) out[k] = a[k];
  for (Index k = 0; k < dim / 2; ++k) out[dim / 2 + k] = b[k];
  return out;
}

Tensor metadata_bias_rows(const GeoTemporalMetadata& meta, GridDims dims, Index dim,
                          const MetadataBiasParams& params, bool drop_time, bool drop_loc) {
  GEOMAE_CHECK(static_cast<Index>(meta.dates.size()) == dims.t,
               "metadata_bias_rows: date count must equal grid T");
  Tensor rows({dims.tokens(), dim});
  if (drop_time && drop_loc) return rows;
  Tensor loc;
  if (!drop_loc) loc = encode_location(meta.lat, meta.lon, dim);
  const Index frame = dims.gh * dims.gw;
  for (Index t = 0; t < dims.t; ++t) {
    Tensor date_enc;
    if (!drop_time) date_enc = encode_date(meta.dates[static_cast<std::size_t>(t)], dim);
    for (Index f = 0; f < frame; ++f) {
      const Index l = t * frame + f;
      for (Index c = 0; c < dim; ++c) {
        double x = 0.0;
        if (!drop_time) x += params.w_time * date_enc[c];
        if (!drop_loc) x += params.w_loc * loc[c];
        rows.at(l, c) = x;
      }
    }
  }
  return rows;
}

Tensor apply_metadata_bias(const Tensor& tokens, GridDims dims, const GeoTemporalMetadata& meta,
                           const MetadataBiasParams& params, bool drop_time, bool drop_loc) {
  GEOMAE_CHECK(tokens.rank() == 3, "apply_metadata_bias: tokens must be [B,L,D]");
  GEOMAE_CHECK(tokens.shape[1] == dims.tokens(), "apply_metadata_bias: token count mismatch");
  if (drop_time && drop_loc) return tokens;
  const Index b = tokens.shape[0], l = tokens.shape[1], d = tokens.shape[2];
  const Tensor rows = metadata_bias_rows(meta, dims, d, params, drop_time, drop_loc);
  Tensor out = tokens;
  for (Index bi = 0; bi < b; ++bi)
    for (Index li = 0; li < l; ++li)
      for (Index c = 0; c < d; ++c) out.at(bi, li, c) += rows.at(li, c);
  return out;
}

DropFlags sample_drop_flags(double drop_prob, Rng& rng) {
  GEOMAE_CHECK(drop_prob >= 0.0 && drop_prob <= 1.0, "sample_drop_flags: probability out of range");
  DropFlags f;
  f.drop_time = rng.bernoulli(drop_prob);
  f.drop_loc = rng.bernoulli(drop_prob);
  return f;
}

DropFlags sample_drop_flags(double drop_prob, std::uint64_t seed) {
  Rng rng(seed);
  return sample_drop_flags(drop_prob, rng);
}

}  // namespace geomae
