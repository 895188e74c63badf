//! Volume file IO: NIfTI-1 (`.nii`, `.nii.gz`) and a raw fallback made of a
//! little-endian C-order `<name>.bin` payload plus a `<name>.json` sidecar
//! holding `shape`, `spacing` and `dtype`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, HeaderBlob, LabelVolume, Volume3D};

const HEADER_LEN: usize = 348;
const DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;

/// Payload as stored on disk.
#[derive(Clone, Debug, PartialEq)]
enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

struct Decoded {
    geom: Geometry,
    payload: Payload,
    header: Option<HeaderBlob>,
}

/// Anything that can be written with [`write_volume`].
pub trait Storable {
    fn geometry(&self) -> Geometry;
    fn header(&self) -> Option<&HeaderBlob>;
    #[doc(hidden)]
    fn write_payload(&self, out: &mut Vec<u8>) -> (i16, &'static str);
}

impl Storable for Volume3D {
    fn geometry(&self) -> Geometry {
        self.geom
    }
    fn header(&self) -> Option<&HeaderBlob> {
        self.header.as_ref()
    }
    fn write_payload(&self, out: &mut Vec<u8>) -> (i16, &'static str) {
        out.reserve(self.data.len() * 4);
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        (DT_FLOAT32, "float32")
    }
}

impl Storable for LabelVolume {
    fn geometry(&self) -> Geometry {
        self.geom
    }
    fn header(&self) -> Option<&HeaderBlob> {
        self.header.as_ref()
    }
    fn write_payload(&self, out: &mut Vec<u8>) -> (i16, &'static str) {
        out.extend_from_slice(&self.data);
        (DT_UINT8, "uint8")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSidecar {
    shape: [usize; 3],
    spacing: [f32; 3],
    dtype: String,
}

enum Format {
    Nifti { gzip: bool },
    Raw { bin: PathBuf, json: PathBuf },
}

fn format_of(path: &Path) -> Format {
    let name = path.to_string_lossy();
    if name.ends_with(".bin") || name.ends_with(".json") {
        let stem = path.with_extension("");
        Format::Raw {
            bin: stem.with_extension("bin"),
            json: stem.with_extension("json"),
        }
    } else {
        Format::Nifti {
            gzip: name.ends_with(".gz"),
        }
    }
}

/// Reads any supported file as an intensity volume (integer payloads are
/// widened to `f32`; NIfTI `scl_slope`/`scl_inter` are applied).
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let d = decode(path.as_ref())?;
    let data = match d.payload {
        Payload::F32(v) => v,
        Payload::U8(v) => v.into_iter().map(f32::from).collect(),
    };
    Ok(Volume3D {
        geom: d.geom,
        data,
        header: d.header,
    })
}

/// Reads any supported file as a binary label; every nonzero value maps to 1.
pub fn read_label(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let d = decode(path.as_ref())?;
    let data = match d.payload {
        Payload::F32(v) => v.into_iter().map(|x| (x != 0.0) as u8).collect(),
        Payload::U8(v) => v.into_iter().map(|x| (x != 0) as u8).collect(),
    };
    Ok(LabelVolume {
        geom: d.geom,
        data,
        header: d.header,
    })
}

/// Writes a volume or label. Labels are stored as unsigned 8-bit, volumes as
/// 32-bit float. The format is chosen from the extension (`.bin`/`.json`
/// selects the raw pair, anything else NIfTI; `.gz` compresses).
pub fn write_volume<V: Storable>(v: &V, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let geom = v.geometry();
    let mut payload = Vec::new();
    let (datatype, dtype_name) = v.write_payload(&mut payload);
    match format_of(path) {
        Format::Raw { bin, json } => {
            std::fs::write(&bin, &payload).map_err(|e| Error::io(&bin, e))?;
            let sidecar = RawSidecar {
                shape: geom.shape,
                spacing: geom.spacing,
                dtype: dtype_name.to_string(),
            };
            let text = serde_json::to_string_pretty(&sidecar)?;
            std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
        }
        Format::Nifti { gzip } => {
            let elem: usize = if datatype == DT_UINT8 { 1 } else { 4 };
            let header = build_header(&geom, v.header(), datatype, elem as i16 * 8);
            let mut bytes = Vec::with_capacity(DATA_OFFSET + payload.len());
            bytes.extend_from_slice(&header);
            bytes.extend_from_slice(&[0u8; DATA_OFFSET - HEADER_LEN]);
            // NIfTI is column-major: first axis fastest.
            reorder(&payload, elem, geom.shape, &mut bytes, true);
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            if gzip {
                let mut enc = GzEncoder::new(w, Compression::fast());
                enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
                enc.finish()
                    .and_then(|mut w| w.flush())
                    .map_err(|e| Error::io(path, e))?;
            } else {
                w.write_all(&bytes)
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

/// Copies `src` (C-order elements of `elem` bytes) into `dst` in Fortran
/// order when `to_fortran`, or the reverse.
fn reorder(src: &[u8], elem: usize, shape: [usize; 3], dst: &mut Vec<u8>, to_fortran: bool) {
    let [n0, n1, n2] = shape;
    let base = dst.len();
    dst.resize(base + src.len(), 0);
    let out = &mut dst[base..];
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                let c = ((i * n1 + j) * n2 + k) * elem;
                let f = (i + n0 * (j + n1 * k)) * elem;
                let (s, d) = if to_fortran { (c, f) } else { (f, c) };
                out[d..d + elem].copy_from_slice(&src[s..s + elem]);
            }
        }
    }
}

fn build_header(
    geom: &Geometry,
    template: Option<&HeaderBlob>,
    datatype: i16,
    bitpix: i16,
) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    let little_template = template
        .filter(|t| t.0.len() == HEADER_LEN && LittleEndian::read_i32(&t.0[0..4]) == 348);
    match little_template {
        Some(t) => h.copy_from_slice(&t.0),
        None => {
            LittleEndian::write_i32(&mut h[0..4], 348);
            // sform from spacing, scanner-anat units (mm).
            LittleEndian::write_i16(&mut h[254..256], 2);
            for (row, off) in [280usize, 296, 312].iter().enumerate() {
                LittleEndian::write_f32(&mut h[off + row * 4..off + row * 4 + 4], geom.spacing[row]);
            }
            h[123] = 2;
        }
    }
    let mut dim = [1i16; 8];
    dim[0] = 3;
    for a in 0..3 {
        dim[a + 1] = geom.shape[a] as i16;
    }
    for (n, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * n..42 + 2 * n], *d);
    }
    LittleEndian::write_i16(&mut h[70..72], datatype);
    LittleEndian::write_i16(&mut h[72..74], bitpix);
    let mut pixdim = [0f32; 8];
    for (n, p) in pixdim.iter_mut().enumerate() {
        *p = LittleEndian::read_f32(&h[76 + 4 * n..80 + 4 * n]);
    }
    if pixdim[0] != -1.0 {
        pixdim[0] = 1.0;
    }
    pixdim[1..4].copy_from_slice(&geom.spacing);
    for (n, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * n..80 + 4 * n], *p);
    }
    LittleEndian::write_f32(&mut h[108..112], DATA_OFFSET as f32);
    // Payload is written unscaled.
    LittleEndian::write_f32(&mut h[112..116], 0.0);
    LittleEndian::write_f32(&mut h[116..120], 0.0);
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

fn decode(path: &Path) -> Result<Decoded> {
    match format_of(path) {
        Format::Raw { bin, json } => decode_raw(&bin, &json),
        Format::Nifti { .. } => decode_nifti(path),
    }
}

fn decode_raw(bin: &Path, json: &Path) -> Result<Decoded> {
    let text = std::fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
    let side: RawSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::MalformedHeader(format!("{}: {e}", json.display())))?;
    let geom = Geometry::new(side.shape, side.spacing)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let bytes = std::fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let payload = match side.dtype.as_str() {
        "uint8" => Payload::U8(bytes),
        "float32" => {
            if bytes.len() % 4 != 0 {
                return Err(Error::MalformedHeader("float32 payload not a multiple of 4".into()));
            }
            let mut v = vec![0f32; bytes.len() / 4];
            LittleEndian::read_f32_into(&bytes, &mut v);
            Payload::F32(v)
        }
        other => return Err(Error::MalformedHeader(format!("unsupported dtype {other}"))),
    };
    let len = match &payload {
        Payload::F32(v) => v.len(),
        Payload::U8(v) => v.len(),
    };
    if len != geom.len() {
        return Err(Error::MalformedHeader(format!(
            "payload has {len} elements, shape {:?} needs {}",
            geom.shape,
            geom.len()
        )));
    }
    Ok(Decoded {
        geom,
        payload,
        header: None,
    })
}

fn decode_nifti(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut raw = Vec::new();
    reader
        .read_to_end(&mut raw)
        .map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        raw = out;
    }
    if raw.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{}: file shorter than a NIfTI-1 header",
            path.display()
        )));
    }
    if LittleEndian::read_i32(&raw[0..4]) == 348 {
        parse_nifti::<LittleEndian>(&raw, path)
    } else if BigEndian::read_i32(&raw[0..4]) == 348 {
        parse_nifti::<BigEndian>(&raw, path)
    } else {
        Err(Error::MalformedHeader(format!(
            "{}: sizeof_hdr is not 348",
            path.display()
        )))
    }
}

fn parse_nifti<B: ByteOrder>(raw: &[u8], path: &Path) -> Result<Decoded> {
    let magic = &raw[344..348];
    if magic != b"n+1\0" && magic != b"ni1\0" {
        return Err(Error::MalformedHeader(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let mut dim = [0i16; 8];
    for (n, d) in dim.iter_mut().enumerate() {
        *d = B::read_i16(&raw[40 + 2 * n..42 + 2 * n]);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::MalformedHeader(format!("dim[0] = {ndim}")));
    }
    let ndim = ndim as usize;
    if dim[1..=ndim].iter().any(|&d| d < 1) {
        return Err(Error::MalformedHeader(format!("non-positive extent in {dim:?}")));
    }
    if ndim > 3 && dim[4..=ndim].iter().any(|&d| d > 1) {
        return Err(Error::Non3d(format!("dims {:?}", &dim[1..=ndim])));
    }
    let mut shape = [1usize; 3];
    for a in 0..ndim.min(3) {
        shape[a] = dim[a + 1] as usize;
    }
    let mut spacing = [1f32; 3];
    for a in 0..3 {
        let p = B::read_f32(&raw[80 + 4 * a..84 + 4 * a]).abs();
        if a < ndim && p > 0.0 && p.is_finite() {
            spacing[a] = p;
        }
    }
    let geom = Geometry::new(shape, spacing).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let datatype = B::read_i16(&raw[70..72]);
    let vox_offset = B::read_f32(&raw[108..112]);
    let offset = if magic == b"n+1\0" {
        (vox_offset.max(DATA_OFFSET as f32)) as usize
    } else {
        return Err(Error::MalformedHeader(
            "two-file NIfTI (.hdr/.img) is not supported".into(),
        ));
    };
    let n = geom.len();
    let elem = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported datatype {other}"
            )))
        }
    };
    let body = raw.get(offset..offset + n * elem).ok_or_else(|| {
        Error::MalformedHeader(format!(
            "{}: payload truncated (need {} bytes after offset {offset})",
            path.display(),
            n * elem
        ))
    })?;
    let mut ordered = Vec::with_capacity(body.len());
    reorder(body, elem, shape, &mut ordered, false);

    let slope = B::read_f32(&raw[112..116]);
    let inter = B::read_f32(&raw[116..120]);
    let scaled = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);

    let payload = if datatype == DT_UINT8 && !scaled {
        Payload::U8(ordered)
    } else if datatype == DT_FLOAT32 && !scaled {
        let mut v = vec![0f32; n];
        B::read_f32_into(&ordered, &mut v);
        Payload::F32(v)
    } else {
        let mut v: Vec<f64> = match datatype {
            DT_UINT8 => ordered.iter().map(|&x| x as f64).collect(),
            DT_INT8 => ordered.iter().map(|&x| x as i8 as f64).collect(),
            DT_INT16 => ordered.chunks_exact(2).map(|c| B::read_i16(c) as f64).collect(),
            DT_UINT16 => ordered.chunks_exact(2).map(|c| B::read_u16(c) as f64).collect(),
            DT_INT32 => ordered.chunks_exact(4).map(|c| B::read_i32(c) as f64).collect(),
            DT_UINT32 => ordered.chunks_exact(4).map(|c| B::read_u32(c) as f64).collect(),
            DT_FLOAT32 => ordered.chunks_exact(4).map(|c| B::read_f32(c) as f64).collect(),
            _ => ordered.chunks_exact(8).map(B::read_f64).collect(),
        };
        if scaled {
            for x in v.iter_mut() {
                *x = *x * slope as f64 + inter as f64;
            }
        }
        Payload::F32(v.into_iter().map(|x| x as f32).collect())
    };
    if let Payload::F32(v) = &payload {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::MalformedHeader("non-finite voxel values".into()));
        }
    }
    // Keep a little-endian copy of the header so it can seed the next write.
    let mut header = raw[..HEADER_LEN].to_vec();
    if B::read_i32(&raw[0..4]) != LittleEndian::read_i32(&raw[0..4]) {
        header = to_little_endian_header::<B>(&raw[..HEADER_LEN]);
    }
    Ok(Decoded {
        geom,
        payload,
        header: Some(HeaderBlob(header)),
    })
}

/// Byte-swaps every numeric header field of a big-endian header.
fn to_little_endian_header<B: ByteOrder>(src: &[u8]) -> Vec<u8> {
    let mut out = src.to_vec();
    let i32_fields = [0usize, 32, 140, 144];
    let i16_fields: Vec<usize> = [36usize]
        .into_iter()
        .chain((0..8).map(|n| 40 + 2 * n))
        .chain([68, 70, 72, 74, 120, 252, 254])
        .collect();
    let f32_fields: Vec<usize> = [56usize, 60, 64]
        .into_iter()
        .chain((0..8).map(|n| 76 + 4 * n))
        .chain([108, 112, 116, 124, 128, 132, 136])
        .chain((0..18).map(|n| 256 + 4 * n))
        .collect();
    for o in i32_fields {
        LittleEndian::write_i32(&mut out[o..o + 4], B::read_i32(&src[o..o + 4]));
    }
    for o in i16_fields {
        LittleEndian::write_i16(&mut out[o..o + 2], B::read_i16(&src[o..o + 2]));
    }
    for o in f32_fields {
        LittleEndian::write_f32(&mut out[o..o + 4], B::read_f32(&src[o..o + 4]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(n: usize, seed: u64) -> Volume3D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = Geometry::new([n, n + 1, n + 2], [0.51, 0.51, 0.8]).unwrap();
        let data = (0..geom.len()).map(|_| rng.gen_range(-100.0..100.0)).collect();
        Volume3D::new(geom, data).unwrap()
    }

    #[test]
    fn zeros_round_trip_nifti() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::zeros(Geometry::isotropic([2, 2, 2]));
        let p = dir.path().join("z.nii");
        write_volume(&v, &p).unwrap();
        let r = read_volume(&p).unwrap();
        assert_eq!(r.data, v.data);
        assert_eq!(r.geom, v.geom);
    }

    #[test]
    fn spacing_read_from_header() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_volume(3, 1);
        let p = dir.path().join("s.nii.gz");
        write_volume(&v, &p).unwrap();
        let r = read_volume(&p).unwrap();
        assert_eq!(r.geom.spacing, [0.51f32, 0.51, 0.80]);
    }

    #[test]
    fn random_volume_round_trips_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_volume(8, 2);
        for name in ["a.nii", "b.nii.gz", "c.bin"] {
            let p = dir.path().join(name);
            write_volume(&v, &p).unwrap();
            let r = read_volume(&p).unwrap();
            assert_eq!(r.geom, v.geom, "{name}");
            assert!(r.data.iter().zip(&v.data).all(|(a, b)| a.to_bits() == b.to_bits()), "{name}");
        }
    }

    #[test]
    fn labels_stored_as_uint8() {
        let dir = tempfile::tempdir().unwrap();
        let geom = Geometry::isotropic([3, 4, 5]);
        let l = LabelVolume::from_fn(geom, |c| (c[0] + c[2]) % 2 == 0);
        let p = dir.path().join("l.nii");
        write_volume(&l, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(LittleEndian::read_i16(&bytes[70..72]), DT_UINT8);
        assert_eq!(bytes.len(), DATA_OFFSET + geom.len());
        assert_eq!(read_label(&p).unwrap().data, l.data);

        let raw = dir.path().join("l.bin");
        write_volume(&l, &raw).unwrap();
        assert_eq!(std::fs::read(&raw).unwrap().len(), geom.len());
        let side: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("l.json")).unwrap())
                .unwrap();
        assert_eq!(side["dtype"], "uint8");
        assert_eq!(read_label(dir.path().join("l.json")).unwrap(), read_label(&raw).unwrap());
    }

    #[test]
    fn axis_order_matches_nifti_convention() {
        // First axis must be fastest in the file.
        let dir = tempfile::tempdir().unwrap();
        let geom = Geometry::isotropic([2, 1, 1]);
        let v = Volume3D::new(geom, vec![1.0, 2.0]).unwrap();
        let p = dir.path().join("o.nii");
        write_volume(&v, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(LittleEndian::read_f32(&bytes[352..356]), 1.0);
        let geom = Geometry::isotropic([2, 1, 3]);
        let v = Volume3D::new(geom, (0..6).map(|x| x as f32).collect()).unwrap();
        write_volume(&v, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // C index of (1,0,0) is 3; it is the second element on disk.
        assert_eq!(LittleEndian::read_f32(&bytes[356..360]), 3.0);
    }

    #[test]
    fn four_d_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::zeros(Geometry::isotropic([2, 2, 2]));
        let p = dir.path().join("x.nii");
        write_volume(&v, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        LittleEndian::write_i16(&mut bytes[40..42], 4);
        LittleEndian::write_i16(&mut bytes[48..50], 2);
        bytes.extend(vec![0u8; 32]);
        std::fs::write(&p, &bytes).unwrap();
        let err = read_volume(&p).unwrap_err();
        assert!(err.to_string().contains("non-3D payload"), "{err}");
    }

    #[test]
    fn missing_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_volume(dir.path().join("none.nii")), Err(Error::Io { .. })));
        let p = dir.path().join("bad.nii");
        std::fs::write(&p, vec![0u8; 400]).unwrap();
        assert!(matches!(read_volume(&p), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::zeros(Geometry::isotropic([2, 2, 2]));
        let p = dir.path().join("missing").join("v.nii");
        assert!(matches!(write_volume(&v, &p), Err(Error::Io { .. })));
    }

    #[test]
    fn orientation_fields_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = random_volume(3, 5);
        let p = dir.path().join("a.nii");
        write_volume(&v, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        LittleEndian::write_i16(&mut bytes[252..254], 1);
        LittleEndian::write_f32(&mut bytes[268..272], -42.5);
        bytes[148..155].copy_from_slice(b"subject");
        std::fs::write(&p, &bytes).unwrap();
        let r = read_volume(&p).unwrap();
        let q = dir.path().join("b.nii.gz");
        write_volume(&r, &q).unwrap();
        let r2 = read_volume(&q).unwrap();
        let h = &r2.header.as_ref().unwrap().0;
        assert_eq!(LittleEndian::read_i16(&h[252..254]), 1);
        assert_eq!(LittleEndian::read_f32(&h[268..272]), -42.5);
        assert_eq!(&h[148..155], b"subject");
        assert_eq!(r2.header, r.header);
    }

    #[test]
    fn int16_with_scaling_is_widened() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::zeros(Geometry::isotropic([2, 1, 1]));
        let p = dir.path().join("i.nii");
        write_volume(&v, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(DATA_OFFSET);
        LittleEndian::write_i16(&mut bytes[70..72], DT_INT16);
        LittleEndian::write_i16(&mut bytes[72..74], 16);
        LittleEndian::write_f32(&mut bytes[112..116], 2.0);
        LittleEndian::write_f32(&mut bytes[116..120], 1.0);
        bytes.extend_from_slice(&(-3i16).to_le_bytes());
        bytes.extend_from_slice(&(5i16).to_le_bytes());
        std::fs::write(&p, &bytes).unwrap();
        assert_eq!(read_volume(&p).unwrap().data, vec![-5.0, 11.0]);
    }
}
