#pragma once

// On-disk formats for volumes and projection images: a JSON sidecar next to a
// raw little-endian float32 payload (x/u fastest).
//
//   volume sidecar:     {"dims":[nx,ny,nz], "spacing_mm":[..], "origin_mm":[..],
//                        "dtype":"f32le", "modality":"MR"|"XRAY"|"SYNTH", "data":"name.raw"}
//   projection sidecar: {"dims":[nu,nv], "spacing_mm":[du,dv], "dtype":"f32le",
//                        "modality":..., "data":"name.raw"}
//
// Paths passed here name the sidecar (".json"); the payload shares its stem.

#include <filesystem>

#include "projsynth/projector.hpp"

namespace projsynth {

void save_volume(const std::filesystem::path& sidecar, const Volume3D& volume);
Volume3D load_volume(const std::filesystem::path& sidecar);

void save_projection(const std::filesystem::path& sidecar, const ProjectionImage& image);
ProjectionImage load_projection(const std::filesystem::path& sidecar);

/// Writes a 16-bit binary PGM with a linear min-max mapping to [0, 65535] and
/// records {"min","max"} of that mapping in a "<stem>.pgm.json" sidecar.
void export_pgm(const std::filesystem::path& pgm, const ProjectionImage& image);

}  // namespace projsynth
