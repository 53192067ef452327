#pragma once

#include "treeseg/point_cloud.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace treeseg {

enum class CloudFormat { columnar_text, columnar_binary, las };

/// Raised for malformed input files.  The message names the line (text) or
/// byte offset (binary) where parsing failed.
class ParseError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Guesses the format from the extension: .las, .cbpc (binary), anything
/// else is columnar text.
CloudFormat format_from_path(const std::filesystem::path& path);

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud load_point_cloud(const std::filesystem::path& path);

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Text reader/writer on in-memory strings (used by the file functions).
PointCloud parse_columnar_text(const std::string& text);
std::string format_columnar_text(const PointCloud& cloud);

/// LAS 1.2-1.4 reader for point formats 0-10.  Coordinates are scaled, the
/// extra-bytes attribute `tree_index` maps to instance_id and
/// `reflectance_1..3` to the reflectance channels.  Best effort; no LAZ.
PointCloud load_las(const std::filesystem::path& path);

/// Minimal LAS 1.2 writer (point format 0, coordinates at 1 mm) carrying
/// tree_index as an extra-bytes attribute.
void save_las(const PointCloud& cloud, const std::filesystem::path& path);

} // namespace treeseg
