#include "svfatlas/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "svfatlas/errors.hpp"

namespace svfatlas {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string afraw_header(const char *kind, const GridShape &shape) {
    std::string h = "AFRAW v1 ";
    h += kind;
    h += ' ';
    h += std::to_string(shape.dim);
    for (int a = 0; a < shape.dim; ++a) h += ' ' + std::to_string(shape.extent[a]);
    for (int a = 0; a < shape.dim; ++a) h += ' ' + format_double(shape.spacing[a]);
    return h;
}

namespace {

template <class T> T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

void finish(std::ofstream &out, const fs::path &path) {
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template <class Stored, class Src>
void write_payload(const fs::path &path, const std::string &header, const std::vector<Src> &values) {
    std::ofstream out = open_out(path);
    out << header << '\n';
    std::vector<Stored> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) buf[i] = to_little(static_cast<Stored>(values[i]));
    out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
    finish(out, path);
}

struct Parsed {
    std::string kind;
    GridShape shape;
    std::vector<char> payload;
};

Parsed parse(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string header;
    if (!std::getline(in, header)) throw FormatError(path.string() + ": empty file");
    std::istringstream hs(header);
    std::string magic, version;
    Parsed p;
    int d = 0;
    hs >> magic >> version >> p.kind >> d;
    if (magic != "AFRAW") throw FormatError(path.string() + ": bad magic '" + magic + "'");
    if (version != "v1") throw FormatError(path.string() + ": unsupported version '" + version + "'");
    if (p.kind != "scalar" && p.kind != "vector" && p.kind != "label") {
        throw FormatError(path.string() + ": unknown kind '" + p.kind + "'");
    }
    if (d != 2 && d != 3) throw FormatError(path.string() + ": dimension must be 2 or 3");
    std::vector<std::int64_t> dims(d);
    std::vector<double> spacing(d);
    for (auto &x : dims) {
        if (!(hs >> x)) throw FormatError(path.string() + ": truncated header (dims)");
    }
    for (auto &x : spacing) {
        if (!(hs >> x)) throw FormatError(path.string() + ": truncated header (spacing)");
    }
    std::string extra;
    if (hs >> extra) throw FormatError(path.string() + ": unexpected header token '" + extra + "'");
    try {
        p.shape = GridShape::from(dims, spacing);
    } catch (const InvalidInput &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    p.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return p;
}

template <class Stored> std::vector<Stored> decode(const Parsed &p, std::size_t count, const fs::path &path) {
    const std::size_t expected = count * sizeof(Stored);
    if (p.payload.size() < expected) {
        throw FormatError(path.string() + ": truncated payload (" + std::to_string(p.payload.size()) + " of " +
                          std::to_string(expected) + " bytes)");
    }
    if (p.payload.size() > expected) throw FormatError(path.string() + ": trailing bytes after payload");
    std::vector<Stored> out(count);
    std::memcpy(out.data(), p.payload.data(), expected);
    for (auto &v : out) v = to_little(v);
    return out;
}

void expect_kind(const Parsed &p, const char *kind, const fs::path &path) {
    if (p.kind != kind) throw FormatError(path.string() + ": expected a " + kind + " field, found " + p.kind);
}

} // namespace

void write_field(const fs::path &path, const ScalarField &f) {
    write_payload<float>(path, afraw_header("scalar", f.shape), f.values);
}

void write_field(const fs::path &path, const VectorField &f) {
    write_payload<float>(path, afraw_header("vector", f.shape), f.values);
}

void write_field(const fs::path &path, const LabelField &f) {
    write_payload<std::uint32_t>(path, afraw_header("label", f.shape), f.labels);
}

void write_map(const fs::path &path, const DeformationMap &m) { write_field(path, m.displacement); }

ScalarField read_scalar(const fs::path &path) {
    const Parsed p = parse(path);
    expect_kind(p, "scalar", path);
    ScalarField f(p.shape);
    const auto data = decode<float>(p, f.size(), path);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = data[i];
    return f;
}

VectorField read_vector(const fs::path &path) {
    const Parsed p = parse(path);
    expect_kind(p, "vector", path);
    VectorField f(p.shape);
    const auto data = decode<float>(p, f.values.size(), path);
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = data[i];
    return f;
}

LabelField read_labels(const fs::path &path) {
    const Parsed p = parse(path);
    expect_kind(p, "label", path);
    LabelField f(p.shape, 0);
    f.labels = decode<std::uint32_t>(p, f.labels.size(), path);
    for (auto l : f.labels) f.num_structures = std::max(f.num_structures, l);
    return f;
}

DeformationMap read_map(const fs::path &path) { return DeformationMap(read_vector(path)); }

void export_pgm(const ScalarField &f, const fs::path &path) {
    const GridShape &s = f.shape;
    const std::int64_t z = s.dim == 3 ? s.extent[2] / 2 : 0;
    std::ofstream out = open_out(path);
    out << "P5\n" << s.extent[0] << ' ' << s.extent[1] << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(s.extent[0]));
    for (std::int64_t y = 0; y < s.extent[1]; ++y) {
        for (std::int64_t x = 0; x < s.extent[0]; ++x) {
            const double v = std::clamp(f.at(x, y, z), 0.0, 1.0);
            row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    finish(out, path);
}

std::vector<ManifestEntry> read_manifest(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string image, label, extra;
        if (!(ls >> image)) continue;
        ls >> label;
        if (ls >> extra) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected '<image> [<label>]'");
        }
        ManifestEntry e;
        e.image = fs::path(image).is_absolute() ? fs::path(image) : base / image;
        if (!label.empty()) e.label = fs::path(label).is_absolute() ? fs::path(label) : base / label;
        out.push_back(std::move(e));
    }
    return out;
}

void write_manifest(const fs::path &path, const std::vector<ManifestEntry> &entries) {
    std::ofstream out = open_out(path);
    for (const auto &e : entries) {
        out << e.image.generic_string();
        if (!e.label.empty()) out << ' ' << e.label.generic_string();
        out << '\n';
    }
    finish(out, path);
}

void write_epoch_log(const fs::path &path, const std::vector<EpochLog> &log) {
    std::ofstream out = open_out(path);
    out << kTrainLogHeader << '\n';
    for (const auto &r : log) {
        out << r.epoch << ',' << format_double(r.total) << ',' << format_double(r.sim) << ','
            << format_double(r.reg) << ',' << format_double(r.pair_atlas) << ',' << format_double(r.pair_image)
            << ',' << format_double(r.folds) << ',' << format_double(r.wall_time) << ','
            << format_double(r.reg_map) << '\n';
    }
    finish(out, path);
}

namespace {

void write_measure(std::ostream &out, const MeasureStats &m, const std::string &name) {
    for (std::uint32_t k = 1; k <= m.structures(); ++k) {
        out << k << ',' << name << ',' << format_double(m.mean[k - 1]) << ',' << format_double(m.std[k - 1])
            << '\n';
    }
    out << "all," << name << ',' << format_double(m.all_mean) << ',' << format_double(m.all_std) << '\n';
}

} // namespace

void write_eval_csv(const fs::path &path, const EvalReport &r) {
    std::ofstream out = open_out(path);
    out << kEvalHeader << '\n';
    write_measure(out, r.d_atlas, "d_atlas");
    if (r.d_atlas_pairwise) write_measure(out, *r.d_atlas_pairwise, "d_atlas_pairwise");
    if (r.d_image) write_measure(out, *r.d_image, r.atlas_seg_from_vote ? "d_image_voted_atlas_seg" : "d_image");
    write_measure(out, r.d_bridge, "d_bridge");
    out << "all,folds_per_map," << format_double(r.folds_mean) << ',' << format_double(r.folds_std) << '\n';
    finish(out, path);
}

} // namespace svfatlas
