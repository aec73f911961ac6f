//! Image, depth and scene-directory file formats.
//!
//! * PPM `P6` and PGM `P5` with maxval 255. Intensities in `[0, 1]` are
//!   clamped and rounded to the nearest code.
//! * PFM `Pf` (one channel), little-endian (scale `-1.0`), rows stored
//!   bottom to top. Invalid depth is written as `0.0` and read back invalid.
//! * `camera.txt`, a line-oriented sidecar holding the intrinsics and the
//!   two poses. Floats use the shortest representation that round-trips.
//!
//! A scene directory holds `{prev,cur,next}.ppm`, `depth_{..}.pfm`,
//! `mask_{..}.pgm` and `camera.txt`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, ImageBuffer, Mask, RigidPose};
use crate::scenesim::{Frame, FrameTriplet};

fn format_err(format: &'static str, path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        format,
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PPM (3 channels) or PGM (1 channel), chosen by channel count.
pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

/// Mask as PGM: 255 for set pixels, 0 otherwise.
pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Splits off up to `n` whitespace-separated header tokens, honouring `#`
/// comments, and returns them with the offset just past the single
/// whitespace byte that ends the header.
fn header_tokens<'a>(bytes: &'a [u8], n: usize, format: &'static str, path: &Path) -> Result<(Vec<&'a str>, usize)> {
    let mut tokens = Vec::with_capacity(n);
    let mut i = 0;
    while tokens.len() < n {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(format_err(format, path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| format_err(format, path, "non-ASCII header"))?;
        tokens.push(tok);
    }
    if i >= bytes.len() {
        return Err(format_err(format, path, "missing pixel data"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, format: &'static str, path: &Path) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format_err(format, path, format!("bad dimension {tok:?}"))),
    }
}

/// Reads P5 or P6 into a 1- or 3-channel image in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let (tok, off) = header_tokens(bytes, 4, "PNM", path)?;
    let channels = match tok[0] {
        "P6" => 3,
        "P5" => 1,
        m => return Err(format_err("PNM", path, format!("unsupported magic {m:?}"))),
    };
    let (w, h) = (parse_dim(tok[1], "PNM", path)?, parse_dim(tok[2], "PNM", path)?);
    if tok[3] != "255" {
        return Err(format_err("PNM", path, format!("maxval {} is not 255", tok[3])));
    }
    let data = &bytes[off..];
    if data.len() != w * h * channels {
        return Err(format_err(
            "PNM",
            path,
            format!("expected {} data bytes, found {}", w * h * channels, data.len()),
        ));
    }
    ImageBuffer::from_vec(w, h, channels, data.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<Mask> {
    let img = decode_pnm(bytes, path)?;
    if img.channels() != 1 {
        return Err(format_err("PGM", path, "mask must be single-channel"));
    }
    Mask::from_vec(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| v >= 0.5).collect(),
    )
}

pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.at(x, y).unwrap_or(0.0) as f32;
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let (tok, off) = header_tokens(bytes, 4, "PFM", path)?;
    if tok[0] != "Pf" {
        return Err(format_err(
            "PFM",
            path,
            format!("expected single-channel Pf, found {:?}", tok[0]),
        ));
    }
    let (w, h) = (parse_dim(tok[1], "PFM", path)?, parse_dim(tok[2], "PFM", path)?);
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| format_err("PFM", path, format!("bad scale {:?}", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("PFM", path, "scale must be finite and non-zero"));
    }
    let data = &bytes[off..];
    if data.len() != w * h * 4 {
        return Err(format_err(
            "PFM",
            path,
            format!("expected {} data bytes, found {}", w * h * 4, data.len()),
        ));
    }
    let mut depths = vec![0.0; w * h];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, x) = (k / w, k % w);
        depths[(h - 1 - row) * w + x] = v as f64;
    }
    DepthMap::from_depths(w, h, depths)
}

fn pose_line(name: &str, pose: &RigidPose) -> String {
    let r = pose.rotation();
    let t = pose.translation();
    let mut s = name.to_string();
    for i in 0..3 {
        for j in 0..3 {
            s += &format!(" {}", r[(i, j)]);
        }
    }
    for i in 0..3 {
        s += &format!(" {}", t[i]);
    }
    s
}

pub fn encode_sidecar(intr: &CameraIntrinsics, pose_to_prev: &RigidPose, pose_to_next: &RigidPose) -> String {
    format!(
        "# intrinsics: fx fy cx cy width height\n\
         # poses map cur-frame points into the named frame: r00..r22 (row-major) t0 t1 t2\n\
         intrinsics {} {} {} {} {} {}\n{}\n{}\n",
        intr.fx,
        intr.fy,
        intr.cx,
        intr.cy,
        intr.width,
        intr.height,
        pose_line("pose_to_prev", pose_to_prev),
        pose_line("pose_to_next", pose_to_next)
    )
}

pub fn decode_sidecar(text: &str, path: &Path) -> Result<(CameraIntrinsics, RigidPose, RigidPose)> {
    let err = |line: usize, msg: &str| format_err("sidecar", path, format!("line {line}: {msg}"));
    let (mut intr, mut prev, mut next) = (None, None, None);
    for (n, line) in text.lines().enumerate().map(|(n, l)| (n + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default();
        let vals: Vec<&str> = it.collect();
        let floats = || -> Result<Vec<f64>> {
            vals.iter()
                .map(|v| v.parse::<f64>().map_err(|_| err(n, &format!("bad number {v:?}"))))
                .collect()
        };
        match key {
            "intrinsics" => {
                if vals.len() != 6 {
                    return Err(err(n, "intrinsics needs 6 values"));
                }
                let f = floats()?;
                let dim = |v: &str| v.parse::<usize>().map_err(|_| err(n, &format!("bad size {v:?}")));
                intr = Some(CameraIntrinsics::new(
                    f[0],
                    f[1],
                    f[2],
                    f[3],
                    dim(vals[4])?,
                    dim(vals[5])?,
                )?);
            }
            "pose_to_prev" | "pose_to_next" => {
                if vals.len() != 12 {
                    return Err(err(n, "pose needs 12 values"));
                }
                let f = floats()?;
                let pose = RigidPose::new(Matrix3::from_row_slice(&f[..9]), Vector3::new(f[9], f[10], f[11]))?;
                if key == "pose_to_prev" {
                    prev = Some(pose);
                } else {
                    next = Some(pose);
                }
            }
            other => return Err(err(n, &format!("unknown key {other:?}"))),
        }
    }
    match (intr, prev, next) {
        (Some(i), Some(p), Some(q)) => Ok((i, p, q)),
        (None, ..) => Err(format_err("sidecar", path, "missing intrinsics")),
        (_, None, _) => Err(format_err("sidecar", path, "missing pose_to_prev")),
        _ => Err(format_err("sidecar", path, "missing pose_to_next")),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    decode_pfm(&read_bytes(path)?, path)
}

/// File names of a scene directory, in write order.
pub fn scene_files() -> Vec<String> {
    let mut v = Vec::new();
    for f in Frame::ALL {
        v.push(format!("{}.ppm", f.name()));
    }
    for f in Frame::ALL {
        v.push(format!("depth_{}.pfm", f.name()));
    }
    for f in Frame::ALL {
        v.push(format!("mask_{}.pgm", f.name()));
    }
    v.push("camera.txt".into());
    v
}

/// Writes a triplet into `dir`, returning the written file names.
pub fn write_scene_dir(dir: &Path, t: &FrameTriplet) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = scene_files();
    let mut blobs: Vec<Vec<u8>> = Vec::new();
    blobs.extend(Frame::ALL.iter().map(|&f| encode_pnm(t.image(f))));
    blobs.extend(Frame::ALL.iter().map(|&f| encode_pfm(t.depth(f))));
    blobs.extend(Frame::ALL.iter().map(|&f| encode_mask(t.mask(f))));
    blobs.push(encode_sidecar(&t.intrinsics, &t.pose_to_prev, &t.pose_to_next).into_bytes());
    for (name, blob) in names.iter().zip(&blobs) {
        write_bytes(&dir.join(name), blob)?;
    }
    Ok(names)
}

fn three<T>(v: Vec<T>) -> [T; 3] {
    v.try_into().unwrap_or_else(|_| unreachable!("one entry per frame"))
}

/// Loads a scene directory. Images come back quantized to 8 bits.
pub fn read_scene_dir(dir: &Path) -> Result<FrameTriplet> {
    let sidecar = dir.join("camera.txt");
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let (intrinsics, pose_to_prev, pose_to_next) = decode_sidecar(&text, &sidecar)?;
    let load = |name: String| -> Result<(Vec<u8>, std::path::PathBuf)> {
        let p = dir.join(name);
        Ok((read_bytes(&p)?, p))
    };
    let mut images = Vec::new();
    let mut depths = Vec::new();
    let mut masks = Vec::new();
    for f in Frame::ALL {
        let (b, p) = load(format!("{}.ppm", f.name()))?;
        images.push(decode_pnm(&b, &p)?);
        let (b, p) = load(format!("depth_{}.pfm", f.name()))?;
        depths.push(decode_pfm(&b, &p)?);
        let (b, p) = load(format!("mask_{}.pgm", f.name()))?;
        masks.push(decode_mask(&b, &p)?);
    }
    let t = FrameTriplet {
        intrinsics,
        images: three(images),
        depths: three(depths),
        masks: three(masks),
        pose_to_prev,
        pose_to_next,
    };
    t.validate()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::{render, suite};

    #[test]
    fn pnm_round_trip_is_exact_on_codes() {
        let data: Vec<f64> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let img = ImageBuffer::from_vec(4, 3, 3, data).unwrap();
        let bytes = encode_pnm(&img);
        assert!(bytes.starts_with(b"P6\n4 3\n255\n"));
        assert_eq!(decode_pnm(&bytes, Path::new("x")).unwrap(), img);
        assert_eq!((quantize(-0.1), quantize(0.5), quantize(1.7)), (0, 128, 255));
        let gray = ImageBuffer::filled(2, 2, 1, 0.2).unwrap();
        assert!(encode_pnm(&gray).starts_with(b"P5\n"));
    }

    #[test]
    fn pnm_header_comments_and_errors() {
        let mut b = b"P5\n# note\n2 1\n255\n".to_vec();
        b.extend([0, 255]);
        assert_eq!(decode_mask(&b, Path::new("m")).unwrap().data(), &[false, true]);
        assert!(decode_pnm(b"P5\n2 1\n255\n\x00", Path::new("m")).is_err());
        assert!(decode_pnm(b"P3\n1 1\n255\n0 0 0", Path::new("m")).is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00", Path::new("m")).is_err());
    }

    #[test]
    fn pfm_layout_and_round_trip() {
        let mut d = DepthMap::from_depths(2, 2, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        d.set(1, None);
        let b = encode_pfm(&d);
        let header = b"Pf\n2 2\n-1.0\n";
        assert!(b.starts_with(header));
        // The first stored row is the bottom one.
        assert_eq!(&b[header.len()..header.len() + 4], &3.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&b, Path::new("d")).unwrap(), d);
    }

    #[test]
    fn sidecar_round_trip_is_bitwise() {
        let t = render(&suite::standard_suite(suite::SuiteKind::Static, 3, 4)[2]).unwrap();
        let text = encode_sidecar(&t.intrinsics, &t.pose_to_prev, &t.pose_to_next);
        let (i, p, n) = decode_sidecar(&text, Path::new("c")).unwrap();
        assert_eq!(i, t.intrinsics);
        assert_eq!(p, t.pose_to_prev);
        assert_eq!(n, t.pose_to_next);
        assert!(decode_sidecar("intrinsics 1 1 0 0 2 2\n", Path::new("c")).is_err());
        assert!(decode_sidecar(&text.replace("pose_to_next", "pose_to_nxt"), Path::new("c")).is_err());
    }
}
