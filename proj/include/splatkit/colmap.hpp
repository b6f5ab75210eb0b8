#pragma once

#include <string>
#include <vector>

#include "splatkit/types.hpp"

namespace splat {

enum class ColmapFormat { Auto, Text, Binary };

/// One registered image: file name, intrinsics index and world-to-camera pose.
struct ImageRecord {
  std::string name;
  int camera_index = 0;
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();
};

/// A COLMAP sparse reconstruction reduced to what the pipeline needs.
struct SfmModel {
  std::vector<CameraModeld> cameras;  // intrinsics only (identity pose)
  std::vector<ImageRecord> image_records;
  PointCloudd points;
  std::vector<std::string> warnings;

  /// Full camera (intrinsics + pose) for one image record.
  CameraModeld camera_for(std::size_t record_index) const;
};

/// Reads cameras/images/points3D in COLMAP text or binary layout.
/// Auto prefers the binary files when both are present.
SfmModel load_colmap_model(const std::string& directory, ColmapFormat format = ColmapFormat::Auto);

}  // namespace splat
