#include "phenom/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace phenom::io {

using nlohmann::json;

namespace {

constexpr char kWellMagic[8] = {'P', 'H', 'W', 'E', 'L', 'L', '0', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

}  // namespace

void save_well(const WellImage& image, const fs::path& path) {
  image.validate();
  json header = {{"schema", "phenom-well-v1"},
                 {"height", image.height},
                 {"width", image.width},
                 {"channels", image.channels},
                 {"channel_names", image.channel_names},
                 {"well_id", image.well_id},
                 {"plate_id", image.plate_id},
                 {"experiment_id", image.experiment_id},
                 {"perturbation_id", image.perturbation_id}};
  std::string hs = header.dump();
  auto os = open_out(path);
  os.write(kWellMagic, 8);
  write_u32(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

WellImage load_well(const fs::path& path) {
  auto is = open_in(path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kWellMagic, 8) != 0)
    throw std::runtime_error("not a well file: " + path.string());
  uint32_t hlen = read_u32(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  json header = json::parse(hs);
  WellImage img;
  img.height = header.at("height").get<int>();
  img.width = header.at("width").get<int>();
  img.channels = header.at("channels").get<int>();
  img.channel_names = header.at("channel_names").get<std::vector<std::string>>();
  img.well_id = header.at("well_id").get<std::string>();
  img.plate_id = header.at("plate_id").get<std::string>();
  img.experiment_id = header.at("experiment_id").get<std::string>();
  img.perturbation_id = header.at("perturbation_id").get<std::string>();
  img.pixels.resize(static_cast<size_t>(img.height) * img.width * img.channels);
  is.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
  if (!is) throw std::runtime_error("truncated well file: " + path.string());
  img.validate();
  return img;
}

void save_dataset(const std::vector<WellImage>& wells, const RelationshipDB& db,
                  const fs::path& dir) {
  fs::create_directories(dir / "wells");
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
  manifest << "well_id,plate_id,experiment_id,perturbation_id,file_path\n";
  for (const auto& w : wells) {
    std::string rel = "wells/" + w.well_id + ".well";
    save_well(w, dir / rel);
    manifest << w.well_id << ',' << w.plate_id << ',' << w.experiment_id << ','
             << w.perturbation_id << ',' << rel << '\n';
  }
  save_relationships(db, dir / "relationships.csv");
}

std::vector<ManifestRow> load_manifest(const fs::path& dataset_dir) {
  auto rows = read_csv(dataset_dir / "manifest.csv", /*skip_header=*/true);
  std::vector<ManifestRow> out;
  for (const auto& r : rows) {
    if (r.size() != 5) throw std::runtime_error("manifest.csv: expected 5 columns");
    out.push_back({r[0], r[1], r[2], r[3], r[4]});
  }
  return out;
}

WellImage load_well_by_row(const fs::path& dataset_dir, const ManifestRow& row) {
  return load_well(dataset_dir / row.file_path);
}

void save_relationships(const RelationshipDB& db, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "# database=" << db.name << '\n';
  os << "perturbation_a,perturbation_b\n";
  for (const auto& [a, b] : db.pairs) os << a << ',' << b << '\n';
}

RelationshipDB load_relationships(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  RelationshipDB db;
  db.name = path.stem().string();
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# database=", 0) == 0) {
      db.name = line.substr(11);
      continue;
    }
    if (line[0] == '#') continue;
    if (!header_seen) {  // column header row
      header_seen = true;
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() < 2) throw std::runtime_error("relationship CSV: expected 2 columns");
    db.add(fields[0], fields[1]);
  }
  return db;
}

void save_table(const EmbeddingTable& table, const fs::path& stem) {
  table.validate();
  fs::path csv = stem;
  csv += ".csv";
  fs::path bin = stem;
  bin += ".f32";
  fs::path hdr = stem;
  hdr += ".json";

  std::ofstream meta(csv);
  if (!meta) throw std::runtime_error("cannot write " + csv.string());
  meta << "well_id,plate_id,experiment_id,perturbation_id,row_index\n";
  auto os = open_out(bin);
  int idx = 0;
  std::vector<float> rowbuf(table.dim);
  for (const auto& r : table.records) {
    meta << r.well_id << ',' << r.plate_id << ',' << r.experiment_id << ','
         << r.perturbation_id << ',' << idx++ << '\n';
    for (int j = 0; j < table.dim; ++j) rowbuf[j] = static_cast<float>(r.vec[j]);
    os.write(reinterpret_cast<const char*>(rowbuf.data()),
             static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
  }
  json header = {{"schema", "phenom-table-v1"},
                 {"rows", static_cast<int>(table.records.size())},
                 {"dim", table.dim}};
  std::ofstream hs(hdr);
  hs << header.dump(2) << '\n';
}

EmbeddingTable load_table(const fs::path& stem) {
  fs::path csv = stem;
  csv += ".csv";
  fs::path bin = stem;
  bin += ".f32";
  fs::path hdr = stem;
  hdr += ".json";

  std::ifstream hs(hdr);
  if (!hs) throw std::runtime_error("cannot read " + hdr.string());
  json header = json::parse(hs);
  if (header.at("schema").get<std::string>() != "phenom-table-v1")
    throw std::runtime_error("unknown table schema in " + hdr.string());
  int rows = header.at("rows").get<int>();
  int dim = header.at("dim").get<int>();

  EmbeddingTable table;
  table.dim = dim;
  auto meta = read_csv(csv, /*skip_header=*/true);
  if (static_cast<int>(meta.size()) != rows)
    throw std::runtime_error("table row count mismatch between csv and json");
  auto is = open_in(bin);
  std::vector<float> rowbuf(dim);
  for (int i = 0; i < rows; ++i) {
    const auto& m = meta[i];
    if (m.size() != 5) throw std::runtime_error("table csv: expected 5 columns");
    EmbeddingRecord rec;
    rec.well_id = m[0];
    rec.plate_id = m[1];
    rec.experiment_id = m[2];
    rec.perturbation_id = m[3];
    is.read(reinterpret_cast<char*>(rowbuf.data()),
            static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated matrix file: " + bin.string());
    rec.vec.assign(rowbuf.begin(), rowbuf.end());
    table.records.push_back(std::move(rec));
  }
  return table;
}

void save_loss_curve(const std::vector<LossPoint>& curve, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "step,loss,lr,val_loss\n";
  os.precision(17);
  for (const auto& p : curve) {
    os << p.step << ',' << p.loss << ',' << p.lr << ',';
    if (std::isfinite(p.val_loss)) os << p.val_loss;
    os << '\n';
  }
}

std::vector<LossPoint> load_loss_curve(const fs::path& path) {
  auto rows = read_csv(path, /*skip_header=*/true);
  std::vector<LossPoint> out;
  for (const auto& r : rows) {
    if (r.size() < 3) throw std::runtime_error("loss curve csv: expected >=3 columns");
    LossPoint p;
    p.step = std::stoll(r[0]);
    p.loss = std::stod(r[1]);
    p.lr = std::stod(r[2]);
    if (r.size() > 3 && !r[3].empty()) p.val_loss = std::stod(r[3]);
    out.push_back(p);
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, bool skip_header) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace phenom::io
