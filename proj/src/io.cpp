#include "hgt/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace hgt {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, const std::string& where) {
    size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw IoError(where + ": not a number: '" + s + "'");
    }
    if (pos != s.size() || !std::isfinite(v))
        throw IoError(where + ": not a number: '" + s + "'");
    return v;
}

long parse_int(const std::string& s, const std::string& where) {
    double v = parse_num(s, where);
    if (v != std::floor(v)) throw IoError(where + ": expected an integer, got '" + s + "'");
    return static_cast<long>(v);
}

}  // namespace

AnnSequence parse_mot_text(const std::string& text, const std::string& origin) {
    std::map<int, FrameAnn> frames;
    std::set<std::pair<int, int>> seen;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string where = origin + ":" + std::to_string(line_no);
        auto f = split(line, ',');
        if (f.size() != 9) throw IoError(where + ": expected 9 fields, got " +
                                         std::to_string(f.size()));
        int frame = static_cast<int>(parse_int(f[0], where));
        int id = static_cast<int>(parse_int(f[1], where));
        double left = parse_num(f[2], where), top = parse_num(f[3], where);
        double w = parse_num(f[4], where), h = parse_num(f[5], where);
        double conf = parse_num(f[6], where);
        int cls = static_cast<int>(parse_int(f[7], where));
        double vis = parse_num(f[8], where);
        if (frame < 1) throw IoError(where + ": frame must be >= 1");
        if (w <= 0.0 || h <= 0.0) throw IoError(where + ": box extents must be positive");
        if (!seen.insert({frame, id}).second)
            throw IoError(where + ": duplicate (frame,id) = (" + std::to_string(frame) + "," +
                          std::to_string(id) + ")");
        TargetAnn t;
        t.id = id;
        t.box = Box{left + w / 2.0, top + h / 2.0, w, h};
        t.conf = conf;
        t.class_id = cls;
        t.visibility = vis;
        frames[frame].frame = frame;
        frames[frame].targets.push_back(t);
    }
    AnnSequence out;
    for (auto& [fr, fa] : frames) {
        std::sort(fa.targets.begin(), fa.targets.end(),
                  [](const TargetAnn& a, const TargetAnn& b) { return a.id < b.id; });
        out.push_back(std::move(fa));
    }
    return out;
}

AnnSequence parse_mot(const std::string& path) { return parse_mot_text(read_file(path), path); }

std::string format_mot(const AnnSequence& seq) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    for (const FrameAnn& f : seq) {
        std::vector<const TargetAnn*> ts;
        for (const TargetAnn& t : f.targets) ts.push_back(&t);
        std::sort(ts.begin(), ts.end(),
                  [](const TargetAnn* a, const TargetAnn* b) { return a->id < b->id; });
        for (const TargetAnn* t : ts)
            os << f.frame << "," << t->id << "," << t->box.left() << "," << t->box.top() << ","
               << t->box.w << "," << t->box.h << "," << t->conf << "," << t->class_id << ","
               << t->visibility << "\n";
    }
    return os.str();
}

void write_mot(const AnnSequence& seq, const std::string& path) {
    write_file(path, format_mot(seq));
}

// ---- checkpoint container --------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'G', 'T', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t off = 0;
    void need(size_t n, const char* what) {
        if (off + n > buf.size())
            throw IoError("truncated checkpoint: need " + std::to_string(n) + " bytes for " +
                          what + " at offset " + std::to_string(off));
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
        off += 4;
        return v;
    }
    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(off, n);
        off += n;
        return s;
    }
};

}  // namespace

void checkpoint_save(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path) {
    std::string buf(kMagic, sizeof(kMagic));
    put_u32(buf, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(buf, static_cast<uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<uint32_t>(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) put_u32(buf, static_cast<uint32_t>(t.dim(i)));
        const auto& d = t.data();
        size_t base = buf.size();
        buf.resize(base + d.size() * sizeof(double));
        std::memcpy(buf.data() + base, d.data(), d.size() * sizeof(double));
    }
    write_file(path, buf);
}

std::vector<std::pair<std::string, Tensor>> checkpoint_load(const std::string& path) {
    std::string buf = read_file(path);
    Reader r{buf};
    if (r.bytes(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw IoError("not a checkpoint file: " + path);
    uint32_t count = r.u32("record count");
    std::vector<std::pair<std::string, Tensor>> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = r.u32("name length");
        std::string name = r.bytes(nlen, "name");
        uint32_t ndim = r.u32("rank");
        std::vector<int> shape;
        size_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint32_t e = r.u32("extent");
            if (e == 0) throw IoError("zero extent in checkpoint record " + name);
            shape.push_back(static_cast<int>(e));
            numel *= e;
        }
        std::vector<double> data(numel);
        std::string raw = r.bytes(numel * sizeof(double), "tensor data");
        std::memcpy(data.data(), raw.data(), raw.size());
        out.emplace_back(name, Tensor(std::move(shape), std::move(data)));
    }
    if (r.off != buf.size())
        throw IoError("trailing bytes in checkpoint at offset " + std::to_string(r.off));
    return out;
}

void load_into(const std::vector<std::pair<std::string, Tensor>>& params,
               const std::vector<std::pair<std::string, Tensor>>& loaded) {
    std::map<std::string, const Tensor*> have;
    for (const auto& [n, t] : loaded) have[n] = &t;
    std::vector<std::string> missing, extra;
    for (const auto& [n, t] : params)
        if (!have.count(n)) missing.push_back(n);
    std::set<std::string> want;
    for (const auto& [n, t] : params) want.insert(n);
    for (const auto& [n, t] : loaded)
        if (!want.count(n)) extra.push_back(n);
    if (!missing.empty() || !extra.empty()) {
        std::ostringstream os;
        os << "checkpoint name mismatch;";
        if (!missing.empty()) {
            os << " missing:";
            for (const auto& n : missing) os << " " << n;
            os << ";";
        }
        if (!extra.empty()) {
            os << " unexpected:";
            for (const auto& n : extra) os << " " << n;
        }
        throw IoError(os.str());
    }
    for (const auto& [n, t] : params) {
        const Tensor* src = have[n];
        if (src->shape() != t.shape())
            throw IoError("checkpoint shape mismatch for " + n);
        const_cast<Tensor&>(t).data_mut() = src->data();
    }
}

// ---- manifest --------------------------------------------------------------

std::string SequenceManifest::dir_of(const std::string& path) {
    return std::filesystem::path(path).parent_path().string();
}

SequenceManifest SequenceManifest::load(const std::string& path) {
    SequenceManifest m;
    std::istringstream is(read_file(path));
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto sp = line.find(' ');
        std::string key = line.substr(0, sp);
        std::string val = sp == std::string::npos ? "" : line.substr(sp + 1);
        std::string where = path + ":" + std::to_string(line_no);
        if (key == "name") m.name = val;
        else if (key == "frames") m.frames = static_cast<int>(parse_int(val, where));
        else if (key == "width") m.width = static_cast<int>(parse_int(val, where));
        else if (key == "height") m.height = static_cast<int>(parse_int(val, where));
        else if (key == "fps") m.fps = parse_num(val, where);
        else if (key == "frames_v") m.frames_v = val;
        else if (key == "frames_t") m.frames_t = val;
        else if (key == "gt_v") m.gt_v = val;
        else if (key == "gt_t") m.gt_t = val;
        else if (key == "tags") { m.tags.clear(); if (!val.empty()) m.tags = split(val, ','); }
        else throw IoError(where + ": unknown manifest key '" + key + "'");
    }
    if (m.frames < 0 || m.width <= 0 || m.height <= 0)
        throw IoError(path + ": manifest missing frames/width/height");
    return m;
}

void SequenceManifest::save(const std::string& path) const {
    std::ostringstream os;
    os << "name " << name << "\n"
       << "frames " << frames << "\n"
       << "width " << width << "\n"
       << "height " << height << "\n"
       << "fps " << fps << "\n"
       << "frames_v " << frames_v << "\n"
       << "frames_t " << frames_t << "\n"
       << "gt_v " << gt_v << "\n"
       << "gt_t " << gt_t << "\n";
    os << "tags ";
    for (size_t i = 0; i < tags.size(); ++i) os << (i ? "," : "") << tags[i];
    os << "\n";
    write_file(path, os.str());
}

// ---- images and raw files --------------------------------------------------

void write_pgm(const Tensor& gray, const std::string& path) {
    if (gray.ndim() != 3 || gray.dim(2) != 1) throw IoError("write_pgm expects (h,w,1)");
    int h = gray.dim(0), w = gray.dim(1);
    std::string buf = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int i = 0; i < h * w; ++i) {
        double v = std::clamp(gray.data()[i], 0.0, 1.0);
        buf.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
    write_file(path, buf);
}

Tensor read_pgm(const std::string& path) {
    std::string buf = read_file(path);
    std::istringstream is(buf);
    std::string magic;
    int w, h, maxv;
    is >> magic >> w >> h >> maxv;
    if (magic != "P5" || !is || w <= 0 || h <= 0 || maxv != 255)
        throw IoError("unsupported PGM header in " + path);
    is.get();  // single whitespace after the header
    size_t off = static_cast<size_t>(is.tellg());
    if (buf.size() - off < static_cast<size_t>(w) * h)
        throw IoError("truncated PGM " + path);
    std::vector<double> data(static_cast<size_t>(w) * h);
    for (size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<unsigned char>(buf[off + i]) / 255.0;
    return Tensor({h, w, 1}, std::move(data));
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& content) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed for " + path);
}

}  // namespace hgt
