#pragma once

// On-disk formats.
//
// AFRAW: one text header line
//   AFRAW v1 <kind> <d> <dims...> <spacing...>\n
// (kind = scalar | vector | label) followed by a little-endian payload:
// float32 per voxel (scalar), float32 x d interleaved per voxel (vector,
// also used for deformation-map displacements), uint32 per voxel (label).
// Fields are held as double in memory, so a roundtrip is bit-exact for
// values representable in float32 and for every file (write(read(f)) == f).

#include <filesystem>
#include <string>
#include <vector>

#include "svfatlas/eval.hpp"
#include "svfatlas/grid.hpp"
#include "svfatlas/optim.hpp"

namespace svfatlas {

std::string afraw_header(const char *kind, const GridShape &shape);

void write_field(const std::filesystem::path &path, const ScalarField &f);
void write_field(const std::filesystem::path &path, const VectorField &f);
void write_field(const std::filesystem::path &path, const LabelField &f);
void write_map(const std::filesystem::path &path, const DeformationMap &m);

ScalarField read_scalar(const std::filesystem::path &path);
VectorField read_vector(const std::filesystem::path &path);
LabelField read_labels(const std::filesystem::path &path);
DeformationMap read_map(const std::filesystem::path &path);

// Binary PGM (P5), [0,1] -> [0,255] with rounding and clamping. 3D fields
// export the central z slice.
void export_pgm(const ScalarField &f, const std::filesystem::path &path);

struct ManifestEntry {
    std::filesystem::path image;
    std::filesystem::path label;  // empty when absent
};

// One member per line: "<image> [<label>]", paths relative to the manifest's
// directory; blank lines and '#' comments are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path &path);
void write_manifest(const std::filesystem::path &path, const std::vector<ManifestEntry> &entries);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

inline constexpr const char *kTrainLogHeader = "epoch,total,sim,reg,pair_atlas,pair_image,folds,wall_time,reg_map";
inline constexpr const char *kEvalHeader = "structure,measure,mean,std";

void write_epoch_log(const std::filesystem::path &path, const std::vector<EpochLog> &log);
void write_eval_csv(const std::filesystem::path &path, const EvalReport &report);

} // namespace svfatlas
