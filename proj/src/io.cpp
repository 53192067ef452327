#include "treeseg/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string_view>

namespace treeseg {

namespace {

constexpr std::string_view kBinaryMagic = "CBPC1";

enum class Field { x, y, z, refl1, refl2, refl3, instance, semantic };

constexpr std::array<std::string_view, 8> kFieldNames = {
  "x", "y", "z", "reflectance_1", "reflectance_2", "reflectance_3", "instance_id", "semantic_id"
};

std::optional<Field> field_from_name(std::string_view name)
{
  for (std::size_t i = 0; i < kFieldNames.size(); ++i)
    if (kFieldNames[i] == name)
      return static_cast<Field>(i);
  if (name == "tree_index")
    return Field::instance;
  return std::nullopt;
}

bool is_label(Field f)
{
  return f == Field::instance || f == Field::semantic;
}

template<typename Cloud>
auto& real_column(Cloud& c, Field f)
{
  switch (f) {
    case Field::x:
      return c.x;
    case Field::y:
      return c.y;
    case Field::z:
      return c.z;
    case Field::refl1:
      return c.reflectance[0];
    case Field::refl2:
      return c.reflectance[1];
    default:
      return c.reflectance[2];
  }
}

template<typename Cloud>
auto& label_column(Cloud& c, Field f)
{
  return f == Field::instance ? c.instance_id : c.semantic_id;
}

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::string_view> split_ws(std::string_view line)
{
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i)
      tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string parse_error(std::size_t line, const std::string& what)
{
  return "line " + std::to_string(line) + ": " + what;
}

void append_double(std::string& out, double v)
{
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), res.ptr);
}

// Little-endian byte helpers.

template<typename T>
void put_le(std::string& out, T value)
{
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.append(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

class ByteReader
{
public:
  explicit ByteReader(std::string_view data)
    : data_(data)
  {
  }

  template<typename T>
  T get()
  {
    need(sizeof(T));
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view bytes(std::size_t n)
  {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void seek(std::size_t pos)
  {
    if (pos > data_.size())
      throw ParseError("offset " + std::to_string(pos) + ": seek past end of file");
    pos_ = pos;
  }

  std::size_t pos() const { return pos_; }

private:
  void need(std::size_t n) const
  {
    if (pos_ + n > data_.size())
      throw ParseError("offset " + std::to_string(pos_) + ": unexpected end of file");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

template<typename T>
T read_le_at(std::string_view data, std::size_t offset)
{
  ByteReader r(data);
  r.seek(offset);
  return r.get<T>();
}

} // namespace

CloudFormat format_from_path(const std::filesystem::path& path)
{
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".las")
    return CloudFormat::las;
  if (ext == ".cbpc" || ext == ".bin")
    return CloudFormat::columnar_binary;
  return CloudFormat::columnar_text;
}

PointCloud parse_columnar_text(const std::string& text)
{
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Field> fields;

  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().starts_with('#'))
      continue;
    std::array<bool, kFieldNames.size()> seen{};
    for (auto tok : tokens) {
      auto f = field_from_name(tok);
      if (!f)
        throw ParseError(parse_error(line_no, "unknown field '" + std::string(tok) + "' in header"));
      if (seen[static_cast<std::size_t>(*f)])
        throw ParseError(parse_error(line_no, "duplicate field '" + std::string(tok) + "' in header"));
      seen[static_cast<std::size_t>(*f)] = true;
      fields.push_back(*f);
    }
    if (!seen[0] || !seen[1] || !seen[2])
      throw ParseError(parse_error(line_no, "header must name x, y and z"));
    break;
  }
  if (fields.empty())
    throw ParseError(parse_error(line_no, "missing header"));

  PointCloud cloud;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().starts_with('#'))
      continue;
    if (tokens.size() != fields.size())
      throw ParseError(parse_error(line_no,
                                   "expected " + std::to_string(fields.size()) + " values, got " +
                                     std::to_string(tokens.size())));
    cloud.push_back({});
    const std::size_t i = cloud.size() - 1;
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto tok = tokens[k];
      const Field f = fields[k];
      if (is_label(f)) {
        std::int32_t v = 0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
          throw ParseError(parse_error(line_no, "bad integer '" + std::string(tok) + "'"));
        label_column(cloud, f)[i] = v;
        continue;
      }
      double v = 0.0;
      if (tok == "NA") {
        if (f == Field::x || f == Field::y || f == Field::z)
          throw ParseError(parse_error(line_no, "missing coordinate"));
        v = kMissingReflectance;
      } else {
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
          throw ParseError(parse_error(line_no, "bad number '" + std::string(tok) + "'"));
        if ((f == Field::x || f == Field::y || f == Field::z) && !std::isfinite(v))
          throw ParseError(parse_error(line_no, "non-finite coordinate"));
      }
      real_column(cloud, f)[i] = v;
    }
  }
  return cloud;
}

std::string format_columnar_text(const PointCloud& cloud)
{
  std::string out;
  for (std::size_t k = 0; k < kFieldNames.size(); ++k) {
    if (k)
      out.push_back(' ');
    out.append(kFieldNames[k]);
  }
  out.push_back('\n');
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    append_double(out, cloud.x[i]);
    out.push_back(' ');
    append_double(out, cloud.y[i]);
    out.push_back(' ');
    append_double(out, cloud.z[i]);
    for (const auto& channel : cloud.reflectance) {
      out.push_back(' ');
      if (channel[i] == kMissingReflectance)
        out.append("NA");
      else
        append_double(out, channel[i]);
    }
    out.push_back(' ');
    out.append(std::to_string(cloud.instance_id[i]));
    out.push_back(' ');
    out.append(std::to_string(cloud.semantic_id[i]));
    out.push_back('\n');
  }
  return out;
}

namespace {

enum BinaryType : std::uint8_t { kF64 = 1, kI32 = 2 };

std::string encode_binary(const PointCloud& cloud)
{
  std::string out(kBinaryMagic);
  put_le<std::uint64_t>(out, cloud.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kFieldNames.size()));
  for (std::size_t k = 0; k < kFieldNames.size(); ++k) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(kFieldNames[k].size()));
    out.append(kFieldNames[k]);
    out.push_back(static_cast<char>(is_label(static_cast<Field>(k)) ? kI32 : kF64));
  }
  for (std::size_t k = 0; k < kFieldNames.size(); ++k) {
    const Field f = static_cast<Field>(k);
    if (is_label(f)) {
      for (auto v : label_column(cloud, f))
        put_le<std::int32_t>(out, v);
    } else {
      for (auto v : real_column(cloud, f))
        put_le<double>(out, v);
    }
  }
  return out;
}

PointCloud decode_binary(std::string_view data)
{
  ByteReader r(data);
  if (r.bytes(kBinaryMagic.size()) != kBinaryMagic)
    throw ParseError("offset 0: bad magic, expected CBPC1");
  const auto n = r.get<std::uint64_t>();
  const auto nfields = r.get<std::uint32_t>();
  std::vector<std::pair<Field, std::uint8_t>> fields;
  std::array<bool, kFieldNames.size()> seen{};
  for (std::uint32_t k = 0; k < nfields; ++k) {
    const std::size_t at = r.pos();
    const auto len = r.get<std::uint16_t>();
    const std::string name(r.bytes(len));
    const auto type = r.get<std::uint8_t>();
    auto f = field_from_name(name);
    if (!f)
      throw ParseError("offset " + std::to_string(at) + ": unknown field '" + name + "'");
    if (seen[static_cast<std::size_t>(*f)])
      throw ParseError("offset " + std::to_string(at) + ": duplicate field '" + name + "'");
    if ((is_label(*f) && type != kI32) || (!is_label(*f) && type != kF64))
      throw ParseError("offset " + std::to_string(at) + ": wrong type for field '" + name + "'");
    seen[static_cast<std::size_t>(*f)] = true;
    fields.emplace_back(*f, type);
  }
  if (!seen[0] || !seen[1] || !seen[2])
    throw ParseError("offset " + std::to_string(r.pos()) + ": field table must contain x, y and z");

  const std::size_t row_bytes = [&] {
    std::size_t s = 0;
    for (auto [f, t] : fields)
      s += t == kF64 ? 8 : 4;
    return s;
  }();
  if (n > 0 && (data.size() - r.pos()) / row_bytes < n)
    throw ParseError("offset " + std::to_string(r.pos()) + ": truncated column data");

  PointCloud cloud(static_cast<std::size_t>(n));
  for (auto [f, t] : fields) {
    if (t == kI32) {
      for (auto& v : label_column(cloud, f))
        v = r.get<std::int32_t>();
    } else {
      auto& col = real_column(cloud, f);
      for (std::size_t i = 0; i < col.size(); ++i) {
        const std::size_t at = r.pos();
        col[i] = r.get<double>();
        if ((f == Field::x || f == Field::y || f == Field::z) && !std::isfinite(col[i]))
          throw ParseError("offset " + std::to_string(at) + ": non-finite coordinate");
      }
    }
  }
  return cloud;
}

} // namespace

// ---- LAS ----------------------------------------------------------------

namespace {

constexpr std::array<std::size_t, 11> kLasBaseRecordSize = { 20, 28, 26, 34, 57, 63, 30, 36, 38, 59, 67 };

struct ExtraAttribute
{
  std::string name;
  std::uint8_t type = 0;
  std::size_t size = 0;
  std::size_t offset = 0; // within the point record
  double scale = 1.0;
  double shift = 0.0;
};

std::size_t extra_type_size(std::uint8_t type, std::uint8_t options)
{
  switch (type) {
    case 0:
      return options;
    case 1:
    case 2:
      return 1;
    case 3:
    case 4:
      return 2;
    case 5:
    case 6:
    case 9:
      return 4;
    case 7:
    case 8:
    case 10:
      return 8;
    default:
      throw ParseError("LAS extra bytes: unsupported data type " + std::to_string(type));
  }
}

double read_extra(std::string_view record, const ExtraAttribute& a)
{
  const std::size_t o = a.offset;
  double raw = 0.0;
  switch (a.type) {
    case 1:
      raw = read_le_at<std::uint8_t>(record, o);
      break;
    case 2:
      raw = read_le_at<std::int8_t>(record, o);
      break;
    case 3:
      raw = read_le_at<std::uint16_t>(record, o);
      break;
    case 4:
      raw = read_le_at<std::int16_t>(record, o);
      break;
    case 5:
      raw = read_le_at<std::uint32_t>(record, o);
      break;
    case 6:
      raw = read_le_at<std::int32_t>(record, o);
      break;
    case 7:
      raw = static_cast<double>(read_le_at<std::uint64_t>(record, o));
      break;
    case 8:
      raw = static_cast<double>(read_le_at<std::int64_t>(record, o));
      break;
    case 9:
      raw = read_le_at<float>(record, o);
      break;
    case 10:
      raw = read_le_at<double>(record, o);
      break;
    default:
      return 0.0;
  }
  return raw * a.scale + a.shift;
}

} // namespace

PointCloud load_las(const std::filesystem::path& path)
{
  const std::string data = read_file(path);
  const std::string_view view(data);
  if (view.size() < 227 || view.substr(0, 4) != "LASF")
    throw ParseError("offset 0: not a LAS file");

  const auto minor = read_le_at<std::uint8_t>(view, 25);
  const auto header_size = read_le_at<std::uint16_t>(view, 94);
  const auto point_offset = read_le_at<std::uint32_t>(view, 96);
  const auto n_vlr = read_le_at<std::uint32_t>(view, 100);
  const auto format = static_cast<std::uint8_t>(read_le_at<std::uint8_t>(view, 104) & 0x3F);
  const auto record_len = read_le_at<std::uint16_t>(view, 105);
  std::uint64_t count = read_le_at<std::uint32_t>(view, 107);
  const double sx = read_le_at<double>(view, 131), sy = read_le_at<double>(view, 139),
               sz = read_le_at<double>(view, 147);
  const double ox = read_le_at<double>(view, 155), oy = read_le_at<double>(view, 163),
               oz = read_le_at<double>(view, 171);
  if (minor >= 4 && header_size >= 255 && count == 0)
    count = read_le_at<std::uint64_t>(view, 247);
  if (format >= kLasBaseRecordSize.size())
    throw ParseError("offset 104: unsupported point data format " + std::to_string(format));
  const std::size_t base = kLasBaseRecordSize[format];
  if (record_len < base)
    throw ParseError("offset 105: point record shorter than its format");

  std::vector<ExtraAttribute> extras;
  std::size_t vlr_pos = header_size;
  for (std::uint32_t v = 0; v < n_vlr; ++v) {
    ByteReader r(view);
    r.seek(vlr_pos);
    r.get<std::uint16_t>();
    std::string user(r.bytes(16));
    user = user.c_str();
    const auto record_id = r.get<std::uint16_t>();
    const auto length = r.get<std::uint16_t>();
    r.bytes(32);
    const std::size_t body = r.pos();
    if (user == "LASF_Spec" && record_id == 4) {
      std::size_t offset = base;
      for (std::size_t d = 0; d + 192 <= length; d += 192) {
        const std::string_view desc = view.substr(body + d, 192);
        ExtraAttribute a;
        a.type = static_cast<std::uint8_t>(desc[2]);
        const auto options = static_cast<std::uint8_t>(desc[3]);
        a.name = std::string(desc.substr(4, 32)).c_str();
        a.size = extra_type_size(a.type, options);
        a.offset = offset;
        if (options & 0x08)
          a.scale = read_le_at<double>(desc, 112);
        if (options & 0x10)
          a.shift = read_le_at<double>(desc, 136);
        offset += a.size;
        extras.push_back(a);
      }
    }
    vlr_pos = body + length;
  }

  if (point_offset + count * record_len > view.size())
    throw ParseError("offset " + std::to_string(point_offset) + ": truncated point records");

  PointCloud cloud(static_cast<std::size_t>(count));
  const bool new_formats = format >= 6;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string_view rec = view.substr(point_offset + i * record_len, record_len);
    cloud.x[i] = read_le_at<std::int32_t>(rec, 0) * sx + ox;
    cloud.y[i] = read_le_at<std::int32_t>(rec, 4) * sy + oy;
    cloud.z[i] = read_le_at<std::int32_t>(rec, 8) * sz + oz;
    const auto cls = read_le_at<std::uint8_t>(rec, new_formats ? 16 : 15);
    (void)cls;
    for (const auto& a : extras) {
      if (a.offset + a.size > rec.size())
        continue;
      const double v = read_extra(rec, a);
      if (a.name == "tree_index")
        cloud.instance_id[i] = static_cast<std::int32_t>(std::llround(v));
      else if (a.name == "reflectance_1")
        cloud.reflectance[0][i] = v;
      else if (a.name == "reflectance_2")
        cloud.reflectance[1][i] = v;
      else if (a.name == "reflectance_3")
        cloud.reflectance[2][i] = v;
    }
    if (cloud.instance_id[i] > 0)
      cloud.semantic_id[i] = static_cast<std::int32_t>(SemanticClass::tree);
  }
  return cloud;
}

void save_las(const PointCloud& cloud, const std::filesystem::path& path)
{
  constexpr std::uint16_t kHeaderSize = 227;
  constexpr std::uint32_t kVlrSize = 54 + 192;
  constexpr std::uint16_t kRecordLen = 20 + 4;
  const double scale = 0.001;
  double minx = 0, miny = 0, minz = 0, maxx = 0, maxy = 0, maxz = 0;
  if (!cloud.empty()) {
    minx = *std::min_element(cloud.x.begin(), cloud.x.end());
    miny = *std::min_element(cloud.y.begin(), cloud.y.end());
    minz = *std::min_element(cloud.z.begin(), cloud.z.end());
    maxx = *std::max_element(cloud.x.begin(), cloud.x.end());
    maxy = *std::max_element(cloud.y.begin(), cloud.y.end());
    maxz = *std::max_element(cloud.z.begin(), cloud.z.end());
  }
  const double ox = std::floor(minx), oy = std::floor(miny), oz = std::floor(minz);

  std::string out("LASF");
  put_le<std::uint16_t>(out, 0); // file source id
  put_le<std::uint16_t>(out, 0); // global encoding
  out.append(16, '\0');          // project guid
  out.push_back(1);
  out.push_back(2);
  out.append(32, '\0'); // system identifier
  std::string software = "treeseg";
  software.resize(32, '\0');
  out.append(software);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint16_t>(out, 2024);
  put_le<std::uint16_t>(out, kHeaderSize);
  put_le<std::uint32_t>(out, kHeaderSize + kVlrSize);
  put_le<std::uint32_t>(out, 1);
  out.push_back(0); // point format 0
  put_le<std::uint16_t>(out, kRecordLen);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  for (int r = 0; r < 5; ++r)
    put_le<std::uint32_t>(out, r == 0 ? static_cast<std::uint32_t>(cloud.size()) : 0);
  put_le<double>(out, scale);
  put_le<double>(out, scale);
  put_le<double>(out, scale);
  put_le<double>(out, ox);
  put_le<double>(out, oy);
  put_le<double>(out, oz);
  put_le<double>(out, maxx);
  put_le<double>(out, minx);
  put_le<double>(out, maxy);
  put_le<double>(out, miny);
  put_le<double>(out, maxz);
  put_le<double>(out, minz);

  // Extra-bytes VLR describing tree_index as int32.
  put_le<std::uint16_t>(out, 0);
  std::string user = "LASF_Spec";
  user.resize(16, '\0');
  out.append(user);
  put_le<std::uint16_t>(out, 4);
  put_le<std::uint16_t>(out, 192);
  out.append(32, '\0');
  std::string desc(192, '\0');
  desc[2] = 6;
  const std::string name = "tree_index";
  std::copy(name.begin(), name.end(), desc.begin() + 4);
  out.append(desc);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    put_le<std::int32_t>(out, static_cast<std::int32_t>(std::llround((cloud.x[i] - ox) / scale)));
    put_le<std::int32_t>(out, static_cast<std::int32_t>(std::llround((cloud.y[i] - oy) / scale)));
    put_le<std::int32_t>(out, static_cast<std::int32_t>(std::llround((cloud.z[i] - oz) / scale)));
    put_le<std::uint16_t>(out, 0); // intensity
    out.push_back(0x09);           // return 1 of 1
    out.push_back(static_cast<char>(cloud.semantic_id[i] == 0 ? 2 : 5));
    out.push_back(0); // scan angle
    out.push_back(0); // user data
    put_le<std::uint16_t>(out, 0);
    put_le<std::int32_t>(out, cloud.instance_id[i]);
  }
  write_file(path, out);
}

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format)
{
  PointCloud cloud;
  switch (format) {
    case CloudFormat::columnar_text:
      cloud = parse_columnar_text(read_file(path));
      break;
    case CloudFormat::columnar_binary:
      cloud = decode_binary(read_file(path));
      break;
    case CloudFormat::las:
      cloud = load_las(path);
      break;
  }
  cloud.validate();
  return cloud;
}

PointCloud load_point_cloud(const std::filesystem::path& path)
{
  return load_point_cloud(path, format_from_path(path));
}

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format)
{
  switch (format) {
    case CloudFormat::columnar_text:
      write_file(path, format_columnar_text(cloud));
      break;
    case CloudFormat::columnar_binary:
      write_file(path, encode_binary(cloud));
      break;
    case CloudFormat::las:
      save_las(cloud, path);
      break;
  }
}

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path)
{
  save_point_cloud(cloud, path, format_from_path(path));
}

} // namespace treeseg
