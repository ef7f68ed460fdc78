//! Byte-exact file emission: binary PGM (P5) for grayscale, binary PPM
//! (P6) for three-channel fields, CSV with LF line endings and '.' decimal
//! separators, and the deterministic filename scheme shared by every
//! command.
//!
//! The data-range convention is x ∈ [−1, 1]: values map linearly onto
//! pixel bytes 0..=255 with rounding, saturating outside the range.

use std::fs;
use std::path::Path;

use ug_core::error::{Error, Result};
use ug_core::field::Field;

/// [−1, 1] → 0..=255 with round-to-nearest and saturation.
pub fn quantize(x: f64) -> u8 {
    (255.0 * (x + 1.0) / 2.0).round().clamp(0.0, 255.0) as u8
}

/// Pixel byte back into [−1, 1] (inverse of [`quantize`] up to rounding).
pub fn dequantize(v: u8) -> f64 {
    2.0 * v as f64 / 255.0 - 1.0
}

/// File extension matching [`write_image`]'s format choice.
pub fn image_ext(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

/// One grayscale plane as binary PGM (P5, maxval 255).
pub fn write_pgm_plane(path: &Path, plane: &[f64], height: usize, width: usize) -> Result<()> {
    assert_eq!(plane.len(), height * width);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(plane.iter().map(|&x| quantize(x)));
    fs::write(path, bytes)?;
    Ok(())
}

/// A two-axis field as an image: PGM for one channel, PPM for three.
pub fn write_image(path: &Path, f: &Field) -> Result<()> {
    let dims = f.dims();
    if dims.len() != 2 {
        return Err(Error::InvalidConfig(format!(
            "image emission needs a two-axis field, got {}",
            f.shape_string()
        )));
    }
    let (h, w) = (dims[0], dims[1]);
    match f.channels() {
        1 => write_pgm_plane(path, f.channel(0), h, w),
        3 => {
            let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
            let (r, g, b) = (f.channel(0), f.channel(1), f.channel(2));
            for i in 0..h * w {
                bytes.push(quantize(r[i]));
                bytes.push(quantize(g[i]));
                bytes.push(quantize(b[i]));
            }
            fs::write(path, bytes)?;
            Ok(())
        }
        c => Err(Error::InvalidConfig(format!(
            "image emission needs 1 or 3 channels, got {c}"
        ))),
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Strict binary-PGM reader (P5, maxval 255) for optional dataset
/// ingestion; pixel bytes map back into [−1, 1]. Header `#` comments are
/// accepted.
pub fn read_pgm(path: &Path) -> Result<Field> {
    let bytes = fs::read(path)?;
    let bad =
        |msg: String| Error::InvalidConfig(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    if next_token(&bytes, &mut pos).as_deref() != Some("P5") {
        return Err(bad("not a binary PGM (magic must be P5)".into()));
    }
    let mut dim = |name: &str| -> Result<usize> {
        next_token(&bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("bad {name} in header")))
    };
    let (w, h, maxval) = (dim("width")?, dim("height")?, dim("maxval")?);
    if maxval != 255 {
        return Err(bad(format!("maxval must be 255, got {maxval}")));
    }
    // A single whitespace byte separates the header from the payload.
    pos += 1;
    let payload = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| bad("truncated pixel payload".into()))?;
    Field::from_vec(1, &[h, w], payload.iter().map(|&v| dequantize(v)).collect())
}

/// Header plus rows, LF-terminated. Rust float formatting always emits a
/// '.' decimal separator, so no locale handling is needed.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// `LxMx…` axis-length string for filenames, e.g. `32x32`.
pub fn res_string(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Common filename stem: every emitted image encodes the experiment, the
/// guidance strength and window, the seed, and the resolution.
pub fn image_stem(experiment: &str, theta: f64, eta: f64, seed: u64, dims: &[usize]) -> String {
    format!("{experiment}_theta{theta:.2}_eta{eta:.2}_seed{seed}_{}", res_string(dims))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn quantize_covers_the_data_range_convention() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 128);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(3.0), 255);
        for v in [0u8, 1, 17, 128, 254, 255] {
            assert_eq!(quantize(dequantize(v)), v);
        }
    }

    #[test]
    fn pgm_bytes_are_exactly_header_plus_payload() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.pgm");
        let f = Field::from_vec(1, &[2, 3], vec![-1.0, -0.5, 0.0, 0.5, 1.0, 2.0]).unwrap();
        write_image(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..9], b"P5\n3 2\n25");
        assert_eq!(&bytes[9..12], b"5\n\x00");
        assert_eq!(&bytes[12..], &[64, 128, 191, 255, 255]);
    }

    #[test]
    fn ppm_interleaves_three_channels() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.ppm");
        let f = Field::from_vec(3, &[1, 2], vec![-1.0, -1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        write_image(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..9], b"P6\n2 1\n25");
        assert_eq!(&bytes[10..], &[b'\n', 0, 128, 255, 0, 128, 255]);
    }

    #[test]
    fn read_pgm_inverts_the_writer() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.pgm");
        let f = Field::from_vec(1, &[2, 2], vec![-1.0, -0.2, 0.4, 1.0]).unwrap();
        write_image(&path, &f).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.dims(), &[2, 2]);
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0, "{a} vs {b}");
        }
    }

    #[test]
    fn read_pgm_accepts_header_comments_and_rejects_other_formats() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5 # binary\n# made by hand\n2 1\n255\n\x00\xff").unwrap();
        let f = read_pgm(&path).unwrap();
        assert_eq!(f.dims(), &[1, 2]);
        assert_eq!(f.data()[0], -1.0);
        assert_eq!(f.data()[1], 1.0);

        let ascii = dir.path().join("a.pgm");
        std::fs::write(&ascii, b"P2\n1 1\n255\n0\n").unwrap();
        assert!(read_pgm(&ascii).is_err());
    }

    #[test]
    fn csv_rows_end_with_lf_only() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&path, "a,b", &["1,0.5".into(), "2,0.25".into()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,0.5\n2,0.25\n");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn filenames_encode_experiment_strength_window_seed_resolution() {
        assert_eq!(
            image_stem("sample_high", 1.0, 0.6, 42, &[32, 32]),
            "sample_high_theta1.00_eta0.60_seed42_32x32"
        );
        assert_eq!(res_string(&[16, 8, 8]), "16x8x8");
    }
}
