#pragma once

// File formats:
//   correspondence CSV  header `xs,ys,zs,xt,yt,zt,label`; label is 1, 0 or
//                       empty (unlabeled). Values are written with 17
//                       significant digits so they round-trip exactly.
//   transform JSON      {"rotation": [9 values, row-major], "translation": [3 values]}
//   ASCII PLY           `element vertex` with float x/y/z properties; other
//                       vertex properties are skipped, other elements ignored.

#include "gpinet/geometry.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>

namespace gpinet::io {

void write_correspondences_csv(std::ostream& os, const CorrespondenceSet& c);
void save_correspondences_csv(const std::filesystem::path& path, const CorrespondenceSet& c);
CorrespondenceSet read_correspondences_csv(std::istream& is);
CorrespondenceSet load_correspondences_csv(const std::filesystem::path& path);

nlohmann::json transform_to_json(const RigidTransform& t);
/// Throws ParseError on malformed input and ContractError if the rotation is not proper.
RigidTransform transform_from_json(const nlohmann::json& j);
void save_transform_json(const std::filesystem::path& path, const RigidTransform& t);
RigidTransform load_transform_json(const std::filesystem::path& path);

Points read_ply_points(std::istream& is);
Points load_ply_points(const std::filesystem::path& path);

/// Pairs vertex i of `source` with vertex i of `target`.
CorrespondenceSet correspondences_from_ply(const std::filesystem::path& source,
                                           const std::filesystem::path& target);

}  // namespace gpinet::io
