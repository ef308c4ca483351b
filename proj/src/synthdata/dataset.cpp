#include "synthdata/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "common/csv.hpp"
#include "common/error.hpp"

namespace whdspot::data {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  fail("unknown split '" + name + "' (expected train, val or test)");
}

SplitSizes split_sizes(std::int64_t total, std::array<double, 3> fractions) {
  require(total >= 0, "dataset: total must be non-negative");
  double sum = 0.0;
  for (double f : fractions) {
    require(f >= 0.0 && f <= 1.0, "dataset: split fractions must lie in [0,1]");
    sum += f;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "dataset: split fractions must sum to 1");
  const auto part = [&](double f) { return static_cast<std::int64_t>(std::floor(total * f + 1e-9)); };
  SplitSizes s;
  s.val = part(fractions[1]);
  s.test = part(fractions[2]);
  s.train = total - s.val - s.test;
  return s;
}

namespace {

std::string image_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%06llu.png", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

Manifest make_dataset(const SceneConfig& config, std::int64_t total, std::array<double, 3> fractions,
                      const fs::path& out_dir) {
  config.validate();
  const SplitSizes sizes = split_sizes(total, fractions);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  struct Files {
    std::string points = "filename,x,y\n";
    std::string boxes = "filename,x,y,w,h\n";
  };
  std::map<Split, Files> files;
  Manifest manifest;
  for (std::int64_t i = 0; i < total; ++i) {
    const Split split = i < sizes.train ? Split::train : i < sizes.train + sizes.val ? Split::val : Split::test;
    const fs::path dir = out_dir / to_string(split);
    if (!files.count(split)) {
      fs::create_directories(dir, ec);
      if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    Files& f = files[split];
    const auto index = static_cast<std::uint64_t>(i);
    const Scene scene = render_scene(config, index);
    const std::string name = image_name(index);
    write_png(dir / name, scene.image);
    for (const auto& p : scene.truth.centroids) f.points += name + "," + fixed(p.x, 3) + "," + fixed(p.y, 3) + "\n";
    for (const auto& b : scene.truth.boxes)
      f.boxes += name + "," + fixed(b.x, 3) + "," + fixed(b.y, 3) + "," + fixed(b.w, 3) + "," + fixed(b.h, 3) + "\n";
    manifest.push_back({name, split, static_cast<int>(scene.truth.centroids.size()), config.seed, index});
  }
  for (Split s : {Split::train, Split::val, Split::test}) {
    const fs::path dir = out_dir / to_string(s);
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    const Files& f = files[s];
    write_text(dir / "points.csv", f.points);
    write_text(dir / "boxes.csv", f.boxes);
  }
  std::string text = "filename,split,count,seed,index\n";
  for (const auto& e : manifest)
    text += e.filename + "," + to_string(e.split) + "," + std::to_string(e.count) + "," + std::to_string(e.seed) +
            "," + std::to_string(e.index) + "\n";
  write_text(out_dir / "manifest.csv", text);
  return manifest;
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.csv";
  if (!fs::exists(path)) fail(ErrorKind::Io, "no dataset manifest at " + path.string());
  const CsvTable t = read_csv(path);
  const std::string src = path.string();
  const auto cf = t.column("filename", src), cs = t.column("split", src), cc = t.column("count", src);
  const auto cseed = t.column("seed", src), ci = t.column("index", src);
  Manifest m;
  for (const auto& row : t.rows) {
    ManifestEntry e;
    e.filename = row[cf];
    e.split = parse_split(row[cs]);
    e.count = static_cast<int>(parse_int(row[cc], src));
    e.seed = static_cast<std::uint64_t>(parse_int(row[cseed], src));
    e.index = static_cast<std::uint64_t>(parse_int(row[ci], src));
    m.push_back(std::move(e));
  }
  return m;
}

std::vector<Sample> load_dataset(const fs::path& dir, Split split) {
  const Manifest manifest = read_manifest(dir);
  std::vector<Sample> samples;
  std::map<std::string, std::size_t> position;
  for (const auto& e : manifest) {
    if (e.split != split) continue;
    position[e.filename] = samples.size();
    Sample s;
    s.filename = e.filename;
    s.index = e.index;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) return samples;

  const fs::path split_dir = dir / to_string(split);
  const fs::path points_path = split_dir / "points.csv", boxes_path = split_dir / "boxes.csv";
  const CsvTable points = read_csv(points_path);
  const CsvTable boxes = read_csv(boxes_path);
  const auto lookup = [&](const std::string& name, const fs::path& src) -> Sample& {
    const auto it = position.find(name);
    if (it == position.end()) fail(ErrorKind::Format, src.string() + ": '" + name + "' is not in the manifest");
    return samples[it->second];
  };
  {
    const std::string src = points_path.string();
    const auto cf = points.column("filename", src), cx = points.column("x", src), cy = points.column("y", src);
    for (const auto& row : points.rows)
      lookup(row[cf], points_path).truth.centroids.push_back({parse_double(row[cx], src), parse_double(row[cy], src)});
  }
  {
    const std::string src = boxes_path.string();
    const auto cf = boxes.column("filename", src), cx = boxes.column("x", src), cy = boxes.column("y", src);
    const auto cw = boxes.column("w", src), ch = boxes.column("h", src);
    for (const auto& row : boxes.rows)
      lookup(row[cf], boxes_path)
          .truth.boxes.push_back({parse_double(row[cx], src), parse_double(row[cy], src), parse_double(row[cw], src),
                                  parse_double(row[ch], src)});
  }
  for (const auto& e : manifest) {
    if (e.split != split) continue;
    Sample& s = samples[position[e.filename]];
    if (static_cast<int>(s.truth.centroids.size()) != e.count || static_cast<int>(s.truth.boxes.size()) != e.count)
      fail(ErrorKind::Format, (split_dir / e.filename).string() + ": manifest lists " + std::to_string(e.count) +
                                  " objects but the ground truth has " + std::to_string(s.truth.centroids.size()) +
                                  " points and " + std::to_string(s.truth.boxes.size()) + " boxes");
    s.image = to_tensor(read_png(split_dir / e.filename));
  }
  return samples;
}

}  // namespace whdspot::data
