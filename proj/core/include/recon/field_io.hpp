#pragma once

#include <string>

#include "recon/grid.hpp"

namespace recon {

// AODF v1 container, little-endian:
//   bytes 0-3   magic "AODF"
//   bytes 4-7   version u32 = 1
//   bytes 8-11  n_time u32
//   bytes 12-15 height u32
//   bytes 16-19 width u32
//   bytes 20-23 payload kind u32 (0 = float32 field, 1 = uint8 mask)
//   payload     row-major (t, i, j), float32 LE or u8
// The same container stores Field (kind 0) and MaskField (kind 1).

void write_field(const Field& x, const std::string& path);
Field read_field(const std::string& path);

void write_mask(const MaskField& m, const std::string& path);
MaskField read_mask(const std::string& path);

// Peeks at the header; returns 0 or 1 without reading the payload.
int aodf_payload_kind(const std::string& path);

}  // namespace recon
