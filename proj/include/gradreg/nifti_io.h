#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gradreg/types.h"

namespace gradreg {

// NIfTI-1 header, 348 bytes, little-endian on disk when written here.
#pragma pack(push, 1)
struct NiftiHeader {
    std::int32_t sizeof_hdr = 348;
    char data_type[10] = {};
    char db_name[18] = {};
    std::int32_t extents = 0;
    std::int16_t session_error = 0;
    char regular = 'r';
    char dim_info = 0;
    std::int16_t dim[8] = {};
    float intent_p1 = 0, intent_p2 = 0, intent_p3 = 0;
    std::int16_t intent_code = 0;
    std::int16_t datatype = 0;
    std::int16_t bitpix = 0;
    std::int16_t slice_start = 0;
    float pixdim[8] = {};
    float vox_offset = 0;
    float scl_slope = 0;
    float scl_inter = 0;
    std::int16_t slice_end = 0;
    char slice_code = 0;
    char xyzt_units = 0;
    float cal_max = 0, cal_min = 0;
    float slice_duration = 0;
    float toffset = 0;
    std::int32_t glmax = 0, glmin = 0;
    char descrip[80] = {};
    char aux_file[24] = {};
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    float quatern_b = 0, quatern_c = 0, quatern_d = 0;
    float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
    float srow_x[4] = {};
    float srow_y[4] = {};
    float srow_z[4] = {};
    char intent_name[16] = {};
    char magic[4] = {};
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

// Datatype codes supported on read; writes use float32 for volumes/fields
// and uint8 or int16 for labels.
enum NiftiDatatype : std::int16_t {
    kNiftiUint8 = 2,
    kNiftiInt16 = 4,
    kNiftiInt32 = 8,
    kNiftiFloat32 = 16,
    kNiftiFloat64 = 64,
};

// Byte-swaps every multi-byte header field in place (used for big-endian
// files; also handy for constructing cross-endian fixtures in tests).
void swap_header_bytes(NiftiHeader& h);

// Scalar volume from a .nii or .nii.gz file. scl_slope/scl_inter are applied
// when slope != 0; qform/sform are parsed into *header (when given) but not
// applied. Both endiannesses accepted.
Volume3 read_volume(const std::string& path, NiftiHeader* header = nullptr);

// Integer label map; the file must hold an integer datatype with no
// intensity scaling.
LabelMap read_labels(const std::string& path, NiftiHeader* header = nullptr);

// Displacement field from a 5-D (X, Y, Z, 1, 3) file, voxel-unit components.
DisplacementField read_field(const std::string& path, NiftiHeader* header = nullptr);

// Writers emit single-file NIfTI-1 ("n+1"), little-endian; a ".gz" suffix
// selects gzip compression. `passthrough` carries qform/sform/descrip from a
// previously read header onto the output.
void write_volume(const Volume3& vol, const std::string& path,
                  const NiftiHeader* passthrough = nullptr);
void write_labels(const LabelMap& labels, const std::string& path,
                  const NiftiHeader* passthrough = nullptr);
// Fields are written with a header extension recording the voxel-unit
// displacement convention.
void write_field(const DisplacementField& field, const std::string& path,
                 const NiftiHeader* passthrough = nullptr);

// Comma-separated x,y,z per line, millimeters; an optional header line is
// detected by a non-numeric first token.
LandmarkSet read_landmarks(const std::string& path);

}  // namespace gradreg
