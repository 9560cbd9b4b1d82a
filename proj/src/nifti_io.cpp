#include "gradreg/nifti_io.h"

#include <zlib.h>

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "gradreg/errors.h"

namespace gradreg {

namespace {

constexpr std::int64_t kHeaderBytes = 348;
constexpr std::int64_t kDefaultVoxOffset = 352;  // header + empty extender

// Extension recording the displacement-unit convention on field files.
constexpr char kFieldNote[] = "displacement_units=voxel";
constexpr std::int32_t kExtCodeComment = 6;

template <typename T>
void swap_bytes(T& value) {
    char* p = reinterpret_cast<char*>(&value);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(p[i], p[sizeof(T) - 1 - i]);
}

struct GzReader {
    gzFile f = nullptr;
    std::string path;
    std::int64_t pos = 0;

    explicit GzReader(const std::string& p) : path(p) {
        f = gzopen(p.c_str(), "rb");
        if (!f)
            throw io_error("cannot open '" + p + "' for reading");
    }
    ~GzReader() {
        if (f)
            gzclose(f);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    void read_exact(void* dst, std::int64_t bytes, const char* what) {
        const int got = gzread(f, dst, unsigned(bytes));
        if (got != bytes)
            throw io_error("truncated data in '" + path + "': expected " + std::to_string(bytes) +
                           " bytes of " + what + " at offset " + std::to_string(pos) + ", got " +
                           std::to_string(got < 0 ? 0 : got));
        pos += bytes;
    }

    void skip_to(std::int64_t offset) {
        while (pos < offset) {
            char sink[512];
            const std::int64_t chunk = std::min<std::int64_t>(offset - pos, sizeof(sink));
            read_exact(sink, chunk, "extension bytes");
        }
    }
};

struct Raw {
    NiftiHeader header;
    bool swapped = false;
    std::vector<char> data;  // native-endian after load
    std::int64_t nvox = 0;   // product of dim[1..dim[0]]
};

int dtype_size(std::int16_t dt) {
    switch (dt) {
        case kNiftiUint8: return 1;
        case kNiftiInt16: return 2;
        case kNiftiInt32: return 4;
        case kNiftiFloat32: return 4;
        case kNiftiFloat64: return 8;
        default: return 0;
    }
}

Raw load_raw(const std::string& path) {
    GzReader in(path);
    Raw raw;
    in.read_exact(&raw.header, kHeaderBytes, "header");

    NiftiHeader& h = raw.header;
    // Endianness via dim[0] plausibility.
    if (h.dim[0] < 1 || h.dim[0] > 7) {
        NiftiHeader swapped = h;
        swap_header_bytes(swapped);
        if (swapped.dim[0] < 1 || swapped.dim[0] > 7)
            throw io_error("bad header in '" + path + "': dim[0] implausible in either byte order" +
                           " (offset 40)");
        h = swapped;
        raw.swapped = true;
    }
    if (h.sizeof_hdr != 348)
        throw io_error("bad header in '" + path + "': sizeof_hdr " + std::to_string(h.sizeof_hdr) +
                       " != 348 (offset 0)");
    if (std::strncmp(h.magic, "n+1", 4) != 0)
        throw io_error("bad magic in '" + path + "': expected single-file \"n+1\" (offset 344)");

    const int esize = dtype_size(h.datatype);
    if (esize == 0)
        throw io_error("unsupported datatype " + std::to_string(h.datatype) + " in '" + path +
                       "' (offset 70)");
    if (h.bitpix != esize * 8)
        throw io_error("bad header in '" + path + "': bitpix " + std::to_string(h.bitpix) +
                       " does not match datatype (offset 72)");

    raw.nvox = 1;
    for (int i = 1; i <= h.dim[0]; ++i) {
        if (h.dim[i] < 1)
            throw io_error("bad header in '" + path + "': dim[" + std::to_string(i) + "] = " +
                           std::to_string(h.dim[i]) + " (offset 40)");
        raw.nvox *= h.dim[i];
    }

    const std::int64_t offset = std::int64_t(h.vox_offset);
    if (offset < kDefaultVoxOffset)
        throw io_error("bad header in '" + path + "': vox_offset " + std::to_string(offset) +
                       " < 352 (offset 108)");
    in.skip_to(offset);

    raw.data.resize(std::size_t(raw.nvox) * esize);
    in.read_exact(raw.data.data(), std::int64_t(raw.data.size()), "voxel data");

    if (raw.swapped && esize > 1) {
        char* p = raw.data.data();
        for (std::int64_t i = 0; i < raw.nvox; ++i, p += esize) {
            for (int b = 0; b < esize / 2; ++b)
                std::swap(p[b], p[esize - 1 - b]);
        }
    }
    return raw;
}

template <typename T>
const T* typed(const Raw& raw) {
    return reinterpret_cast<const T*>(raw.data.data());
}

// Converts one element to double, pre-scaling.
double element_at(const Raw& raw, std::int64_t i) {
    switch (raw.header.datatype) {
        case kNiftiUint8: return double(typed<std::uint8_t>(raw)[i]);
        case kNiftiInt16: return double(typed<std::int16_t>(raw)[i]);
        case kNiftiInt32: return double(typed<std::int32_t>(raw)[i]);
        case kNiftiFloat32: return double(typed<float>(raw)[i]);
        default: return typed<double>(raw)[i];
    }
}

std::vector<float> to_scalars(const Raw& raw, const std::string& path) {
    const NiftiHeader& h = raw.header;
    const bool scale = h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
    std::vector<float> out(std::size_t(raw.nvox));

    if (!scale && h.datatype == kNiftiFloat32) {
        std::memcpy(out.data(), raw.data.data(), raw.data.size());
    } else {
        for (std::int64_t i = 0; i < raw.nvox; ++i) {
            double v = element_at(raw, i);
            if (scale)
                v = v * double(h.scl_slope) + double(h.scl_inter);
            out[std::size_t(i)] = float(v);
        }
    }
    for (std::int64_t i = 0; i < raw.nvox; ++i) {
        if (!std::isfinite(out[std::size_t(i)]))
            throw io_error("non-finite voxel value in '" + path + "' at linear index " +
                           std::to_string(i));
    }
    return out;
}

Dims dims3(const NiftiHeader& h) {
    return Dims{h.dim[1], h.dim[2], h.dim[3]};
}

Vec3 spacing3(const NiftiHeader& h) {
    return Vec3{double(h.pixdim[1]), double(h.pixdim[2]), double(h.pixdim[3])};
}

void require_3d(const Raw& raw, const std::string& path) {
    if (raw.header.dim[0] != 3)
        throw io_error("'" + path + "' is " + std::to_string(raw.header.dim[0]) +
                       "-D, expected a 3-D volume");
}

// ---------------------------------------------------------------------------
// Writing.

struct Writer {
    virtual ~Writer() = default;
    virtual void write(const void* src, std::int64_t bytes) = 0;
};

struct PlainWriter : Writer {
    std::ofstream f;
    explicit PlainWriter(const std::string& path) : f(path, std::ios::binary) {
        if (!f)
            throw io_error("cannot open '" + path + "' for writing");
    }
    void write(const void* src, std::int64_t bytes) override {
        f.write(static_cast<const char*>(src), bytes);
        if (!f)
            throw io_error("write failure");
    }
};

struct GzWriter : Writer {
    gzFile f;
    explicit GzWriter(const std::string& path) {
        f = gzopen(path.c_str(), "wb");
        if (!f)
            throw io_error("cannot open '" + path + "' for writing");
    }
    ~GzWriter() override {
        if (f)
            gzclose(f);
    }
    void write(const void* src, std::int64_t bytes) override {
        if (gzwrite(f, src, unsigned(bytes)) != bytes)
            throw io_error("write failure");
    }
};

std::unique_ptr<Writer> open_writer(const std::string& path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0)
        return std::make_unique<GzWriter>(path);
    return std::make_unique<PlainWriter>(path);
}

std::int16_t checked_dim(int n, const std::string& path) {
    if (n > 32767)
        throw io_error("cannot write '" + path + "': dim " + std::to_string(n) +
                       " overflows the int16 header field");
    return std::int16_t(n);
}

NiftiHeader make_header(const Dims& d, const Vec3& spacing, std::int16_t datatype, bool field,
                        const NiftiHeader* passthrough, const std::string& path) {
    NiftiHeader h;
    h.dim[0] = field ? 5 : 3;
    h.dim[1] = checked_dim(d.x, path);
    h.dim[2] = checked_dim(d.y, path);
    h.dim[3] = checked_dim(d.z, path);
    h.dim[4] = 1;
    h.dim[5] = field ? 3 : 1;
    h.dim[6] = 1;
    h.dim[7] = 1;
    h.datatype = datatype;
    h.bitpix = std::int16_t(dtype_size(datatype) * 8);
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = float(spacing.x);
    h.pixdim[2] = float(spacing.y);
    h.pixdim[3] = float(spacing.z);
    h.pixdim[4] = 1.0f;
    h.pixdim[5] = 1.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // millimeters
    std::strncpy(h.descrip, "gradreg", sizeof(h.descrip) - 1);
    if (field) {
        h.intent_code = 1007;  // vector-valued voxels
        std::strncpy(h.intent_name, "displacement", sizeof(h.intent_name) - 1);
    }
    if (passthrough) {
        h.qform_code = passthrough->qform_code;
        h.sform_code = passthrough->sform_code;
        h.quatern_b = passthrough->quatern_b;
        h.quatern_c = passthrough->quatern_c;
        h.quatern_d = passthrough->quatern_d;
        h.qoffset_x = passthrough->qoffset_x;
        h.qoffset_y = passthrough->qoffset_y;
        h.qoffset_z = passthrough->qoffset_z;
        std::memcpy(h.srow_x, passthrough->srow_x, sizeof(h.srow_x));
        std::memcpy(h.srow_y, passthrough->srow_y, sizeof(h.srow_y));
        std::memcpy(h.srow_z, passthrough->srow_z, sizeof(h.srow_z));
        std::memcpy(h.descrip, passthrough->descrip, sizeof(h.descrip));
    }
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

void write_file(NiftiHeader h, const void* data, std::int64_t bytes, bool field_note,
                const std::string& path) {
    // Extension block: 8-byte (esize, ecode) preamble + payload, esize a
    // multiple of 16.
    std::vector<char> ext;
    if (field_note) {
        const std::int32_t payload = std::int32_t(sizeof(kFieldNote));
        std::int32_t esize = 8 + payload;
        esize = (esize + 15) / 16 * 16;
        ext.assign(std::size_t(esize), 0);
        std::memcpy(ext.data(), &esize, 4);
        std::memcpy(ext.data() + 4, &kExtCodeComment, 4);
        std::memcpy(ext.data() + 8, kFieldNote, sizeof(kFieldNote));
    }
    h.vox_offset = float(kDefaultVoxOffset + std::int64_t(ext.size()));

    auto w = open_writer(path);
    w->write(&h, kHeaderBytes);
    const char extender[4] = {ext.empty() ? char(0) : char(1), 0, 0, 0};
    w->write(extender, 4);
    if (!ext.empty())
        w->write(ext.data(), std::int64_t(ext.size()));
    w->write(data, bytes);
}

}  // namespace

void swap_header_bytes(NiftiHeader& h) {
    swap_bytes(h.sizeof_hdr);
    swap_bytes(h.extents);
    swap_bytes(h.session_error);
    for (auto& v : h.dim)
        swap_bytes(v);
    swap_bytes(h.intent_p1);
    swap_bytes(h.intent_p2);
    swap_bytes(h.intent_p3);
    swap_bytes(h.intent_code);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    swap_bytes(h.slice_start);
    for (auto& v : h.pixdim)
        swap_bytes(v);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
    swap_bytes(h.slice_end);
    swap_bytes(h.cal_max);
    swap_bytes(h.cal_min);
    swap_bytes(h.slice_duration);
    swap_bytes(h.toffset);
    swap_bytes(h.glmax);
    swap_bytes(h.glmin);
    swap_bytes(h.qform_code);
    swap_bytes(h.sform_code);
    swap_bytes(h.quatern_b);
    swap_bytes(h.quatern_c);
    swap_bytes(h.quatern_d);
    swap_bytes(h.qoffset_x);
    swap_bytes(h.qoffset_y);
    swap_bytes(h.qoffset_z);
    for (auto& v : h.srow_x)
        swap_bytes(v);
    for (auto& v : h.srow_y)
        swap_bytes(v);
    for (auto& v : h.srow_z)
        swap_bytes(v);
}

Volume3 read_volume(const std::string& path, NiftiHeader* header) {
    Raw raw = load_raw(path);
    require_3d(raw, path);
    if (header)
        *header = raw.header;
    return Volume3(dims3(raw.header), spacing3(raw.header), to_scalars(raw, path));
}

LabelMap read_labels(const std::string& path, NiftiHeader* header) {
    Raw raw = load_raw(path);
    require_3d(raw, path);
    const NiftiHeader& h = raw.header;
    if (h.datatype != kNiftiUint8 && h.datatype != kNiftiInt16 && h.datatype != kNiftiInt32)
        throw io_error("label file '" + path + "' must hold an integer datatype, got code " +
                       std::to_string(h.datatype));
    if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
        throw io_error("label file '" + path + "' carries intensity scaling");
    std::vector<std::int32_t> out(std::size_t(raw.nvox));
    for (std::int64_t i = 0; i < raw.nvox; ++i)
        out[std::size_t(i)] = std::int32_t(element_at(raw, i));
    if (header)
        *header = h;
    return LabelMap(dims3(h), spacing3(h), std::move(out));
}

DisplacementField read_field(const std::string& path, NiftiHeader* header) {
    Raw raw = load_raw(path);
    const NiftiHeader& h = raw.header;
    if (h.dim[0] != 5 || h.dim[4] != 1 || h.dim[5] != 3)
        throw io_error("'" + path + "' is not a displacement field: expected 5-D (X,Y,Z,1,3)");
    if (h.datatype != kNiftiFloat32 && h.datatype != kNiftiFloat64)
        throw io_error("field file '" + path + "' must be float32 or float64, got code " +
                       std::to_string(h.datatype));
    if (header)
        *header = h;
    return DisplacementField(dims3(h), spacing3(h), to_scalars(raw, path));
}

void write_volume(const Volume3& vol, const std::string& path, const NiftiHeader* passthrough) {
    NiftiHeader h = make_header(vol.dims(), vol.spacing(), kNiftiFloat32, false, passthrough, path);
    write_file(h, vol.data().data(), std::int64_t(vol.data().size()) * 4, false, path);
}

void write_labels(const LabelMap& labels, const std::string& path,
                  const NiftiHeader* passthrough) {
    std::int32_t max_label = 0;
    for (std::int32_t v : labels.data())
        max_label = std::max(max_label, v);

    if (max_label <= 255) {
        std::vector<std::uint8_t> bytes(labels.data().begin(), labels.data().end());
        NiftiHeader h =
            make_header(labels.dims(), labels.spacing(), kNiftiUint8, false, passthrough, path);
        write_file(h, bytes.data(), std::int64_t(bytes.size()), false, path);
        return;
    }
    if (max_label > 32767)
        throw io_error("cannot write '" + path + "': label " + std::to_string(max_label) +
                       " overflows int16");
    std::vector<std::int16_t> shorts(labels.data().begin(), labels.data().end());
    NiftiHeader h =
        make_header(labels.dims(), labels.spacing(), kNiftiInt16, false, passthrough, path);
    write_file(h, shorts.data(), std::int64_t(shorts.size()) * 2, false, path);
}

void write_field(const DisplacementField& field, const std::string& path,
                 const NiftiHeader* passthrough) {
    NiftiHeader h =
        make_header(field.dims(), field.spacing(), kNiftiFloat32, true, passthrough, path);
    write_file(h, field.data().data(), std::int64_t(field.data().size()) * 4, true, path);
}

LandmarkSet read_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw io_error("cannot open '" + path + "' for reading");

    LandmarkSet out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Strip trailing CR from CRLF files.
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ','))
            fields.push_back(tok);

        auto parse = [](const std::string& s, double& value) {
            try {
                std::size_t used = 0;
                value = std::stod(s, &used);
                while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used])))
                    ++used;
                return used == s.size() && std::isfinite(value);
            } catch (const std::exception&) {
                return false;
            }
        };

        double v[3] = {};
        // A leading line whose first token is non-numeric is a header.
        if (line_no == 1 && out.points.empty() && !fields.empty() && !parse(fields[0], v[0]))
            continue;
        bool ok = fields.size() == 3;
        for (int c = 0; ok && c < 3; ++c)
            ok = parse(fields[std::size_t(c)], v[c]);
        if (!ok)
            throw io_error("malformed landmark row at line " + std::to_string(line_no) + " in '" +
                           path + "'");
        out.points.push_back(Vec3{v[0], v[1], v[2]});
    }
    return out;
}

}  // namespace gradreg
