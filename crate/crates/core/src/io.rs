//! Plain-text I/O: xyz-text and ASCII PLY clouds, xyz-text flow fields,
//! key=value metric blocks, and the benchmark CSV header.
//!
//! xyz-text: one point per line, three whitespace-separated decimals,
//! optional trailing feature columns of uniform count; `#` starts a comment
//! line. Floats are written with 17 significant digits so every f64
//! round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cloud::{FlowField, PointCloud};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::metrics::FlowMetrics;

/// Supported cloud file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzText,
    PlyAscii,
}

/// A cloud file reference: where it lives and how it is encoded.
#[derive(Debug, Clone)]
pub struct CloudFile {
    pub path: PathBuf,
    pub format: CloudFormat,
}

impl CloudFile {
    pub fn xyz(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), format: CloudFormat::XyzText }
    }

    pub fn ply(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), format: CloudFormat::PlyAscii }
    }

    /// Pick the format from the file extension: `.ply` is PLY, anything else
    /// is xyz-text.
    pub fn auto(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::XyzText,
        };
        Self { path, format }
    }
}

/// Exact decimal serialization for f64 (17 significant digits).
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_cloud(file: &CloudFile) -> Result<PointCloud> {
    let text = fs::read_to_string(&file.path)?;
    match file.format {
        CloudFormat::XyzText => parse_xyz_cloud(&text),
        CloudFormat::PlyAscii => parse_ply_cloud(&text),
    }
}

pub fn write_cloud(cloud: &PointCloud, file: &CloudFile) -> Result<()> {
    let text = match file.format {
        CloudFormat::XyzText => format_xyz_cloud(cloud),
        CloudFormat::PlyAscii => format_ply_cloud(cloud),
    };
    fs::write(&file.path, text)?;
    Ok(())
}

/// Write a flow field as xyz-text, one vector per line.
pub fn write_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for v in flow.vectors() {
        let _ = writeln!(out, "{} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]));
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Read a flow field from xyz-text (exactly three columns per line).
pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut vectors = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols = parse_row(trimmed, line_no)?;
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 columns, got {}", cols.len()),
            });
        }
        vectors.push([cols[0], cols[1], cols[2]]);
    }
    if vectors.is_empty() {
        return Err(Error::Dimension("flow file contains no vectors".into()));
    }
    FlowField::new(vectors)
}

fn parse_row(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("cannot parse '{tok}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value '{tok}'"),
                });
            }
            Ok(v)
        })
        .collect()
}

fn parse_xyz_cloud(text: &str) -> Result<PointCloud> {
    let mut points: Vec<Vec3> = Vec::new();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut feature_dim: Option<usize> = None;
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols = parse_row(trimmed, line_no)?;
        if cols.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 columns, got {}", cols.len()),
            });
        }
        let dim = cols.len() - 3;
        match feature_dim {
            None => feature_dim = Some(dim),
            Some(d) if d != dim => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {d} feature columns, got {dim}"),
                });
            }
            _ => {}
        }
        points.push([cols[0], cols[1], cols[2]]);
        features.push(cols[3..].to_vec());
    }
    if points.is_empty() {
        return Err(Error::Dimension("cloud file contains no points".into()));
    }
    if feature_dim == Some(0) {
        PointCloud::new(points)
    } else {
        PointCloud::with_features(points, features)
    }
}

fn format_xyz_cloud(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
        if let Some(features) = cloud.features() {
            for v in &features[i] {
                let _ = write!(out, " {}", fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

fn parse_ply_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (line_no, first) = lines
        .next()
        .ok_or(Error::Dimension("empty PLY file".into()))?;
    if first != "ply" {
        return Err(Error::Parse { line: line_no, message: "missing 'ply' magic".into() });
    }

    let mut vertex_count: Option<usize> = None;
    let mut vertex_props: Vec<String> = Vec::new();
    // (element name, count) in declaration order
    let mut elements: Vec<(String, usize)> = Vec::new();
    let mut header_end = 0usize;
    for (line_no, line) in lines.by_ref() {
        if line == "end_header" {
            header_end = line_no;
            break;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                if toks.next() != Some("ascii") {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "only ascii PLY is supported".into(),
                    });
                }
            }
            Some("element") => {
                let name = toks.next().unwrap_or_default().to_string();
                let count: usize = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or(Error::Parse {
                        line: line_no,
                        message: "bad element count".into(),
                    })?;
                if name == "vertex" {
                    vertex_count = Some(count);
                }
                elements.push((name, count));
            }
            Some("property") => {
                if let Some(("vertex", _)) =
                    elements.last().map(|(n, c)| (n.as_str(), c))
                {
                    let name = line.split_whitespace().last().unwrap_or_default();
                    vertex_props.push(name.to_string());
                }
            }
            _ => {}
        }
    }
    if header_end == 0 {
        return Err(Error::Parse { line: 1, message: "missing end_header".into() });
    }
    let vertex_count =
        vertex_count.ok_or(Error::Parse { line: header_end, message: "no vertex element".into() })?;
    let ix = vertex_props.iter().position(|p| p == "x").ok_or(Error::Parse {
        line: header_end,
        message: "vertex element lacks an x property".into(),
    })?;
    let iy = vertex_props.iter().position(|p| p == "y").ok_or(Error::Parse {
        line: header_end,
        message: "vertex element lacks a y property".into(),
    })?;
    let iz = vertex_props.iter().position(|p| p == "z").ok_or(Error::Parse {
        line: header_end,
        message: "vertex element lacks a z property".into(),
    })?;

    // Data lines for elements declared before "vertex" are skipped; lines
    // after the vertex block (faces etc.) are ignored.
    let mut skip = 0usize;
    for (name, count) in &elements {
        if name == "vertex" {
            break;
        }
        skip += count;
    }

    let mut points = Vec::with_capacity(vertex_count);
    for (line_no, line) in lines.skip(skip).take(vertex_count) {
        let cols = parse_row(line, line_no)?;
        let need = ix.max(iy).max(iz);
        if cols.len() <= need {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least {} columns, got {}", need + 1, cols.len()),
            });
        }
        points.push([cols[ix], cols[iy], cols[iz]]);
    }
    if points.len() != vertex_count {
        return Err(Error::Parse {
            line: header_end,
            message: format!("expected {vertex_count} vertices, found {}", points.len()),
        });
    }
    PointCloud::new(points)
}

fn format_ply_cloud(cloud: &PointCloud) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ply");
    let _ = writeln!(out, "format ascii 1.0");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    let _ = writeln!(out, "property float x");
    let _ = writeln!(out, "property float y");
    let _ = writeln!(out, "property float z");
    let _ = writeln!(out, "end_header");
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]));
    }
    out
}

/// Render metrics as a flat key=value block, one metric per line.
pub fn format_metrics(metrics: &FlowMetrics) -> String {
    format!(
        "epe3d={}\nacc3d_strict={}\nacc3d_relaxed={}\noutliers3d={}\n",
        metrics.epe3d, metrics.acc3d_strict, metrics.acc3d_relaxed, metrics.outliers3d
    )
}

pub fn write_metrics(metrics: &FlowMetrics, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_metrics(metrics))?;
    Ok(())
}

/// Parse a key=value metric block produced by [`format_metrics`].
pub fn parse_metrics(text: &str) -> Result<FlowMetrics> {
    let mut epe3d = None;
    let mut strict = None;
    let mut relaxed = None;
    let mut outliers = None;
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
            line: line_no,
            message: "expected key=value".into(),
        })?;
        let value: f64 = value.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("cannot parse '{}' as a number", value.trim()),
        })?;
        match key.trim() {
            "epe3d" => epe3d = Some(value),
            "acc3d_strict" => strict = Some(value),
            "acc3d_relaxed" => relaxed = Some(value),
            "outliers3d" => outliers = Some(value),
            _ => {}
        }
    }
    match (epe3d, strict, relaxed, outliers) {
        (Some(epe3d), Some(acc3d_strict), Some(acc3d_relaxed), Some(outliers3d)) => {
            Ok(FlowMetrics { epe3d, acc3d_strict, acc3d_relaxed, outliers3d })
        }
        _ => Err(Error::Parse { line: 1, message: "missing metric keys".into() }),
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<FlowMetrics> {
    parse_metrics(&fs::read_to_string(path.as_ref())?)
}

/// Header row of the benchmark sweep CSV. Data rows hold one run each;
/// aggregate rows use `seed=all, status=mean`. `wall_ms` is written as 0
/// under deterministic mode so reruns are byte-identical.
pub const BENCH_CSV_HEADER: &str =
    "loss,seed,status,epe3d,acc3d_strict,acc3d_relaxed,outliers3d,wall_ms";

/// One successful benchmark CSV row.
pub fn format_bench_row(loss: &str, seed: &str, status: &str, m: &FlowMetrics, wall_ms: u64) -> String {
    format!(
        "{loss},{seed},{status},{:.6},{:.6},{:.6},{:.6},{wall_ms}",
        m.epe3d, m.acc3d_strict, m.acc3d_relaxed, m.outliers3d
    )
}

/// One failed benchmark CSV row (metrics empty).
pub fn format_bench_failure(loss: &str, seed: &str) -> String {
    format!("{loss},{seed},failed,,,,,0")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn xyz_reads_points_and_comments() {
        let cloud = parse_xyz_cloud("# comment\n0 0 0\n1 2 3\n").unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points()[1], [1.0, 2.0, 3.0]);
        assert!(cloud.features().is_none());
    }

    #[test]
    fn xyz_short_line_errors_with_line_number() {
        match parse_xyz_cloud("1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_xyz_cloud("0 0 0\nnan 0 0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn xyz_empty_file_is_dimension_error() {
        assert!(matches!(parse_xyz_cloud("# nothing\n"), Err(Error::Dimension(_))));
    }

    #[test]
    fn xyz_feature_columns_must_be_uniform() {
        let ok = parse_xyz_cloud("0 0 0 1 2\n1 1 1 3 4\n").unwrap();
        assert_eq!(ok.features().unwrap()[1], vec![3.0, 4.0]);
        match parse_xyz_cloud("0 0 0 1\n1 1 1 1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn cloud_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud::with_features(
            vec![[0.1234567890123456, -7.25e-11, 3.0], [1.0 / 3.0, 2.0f64.sqrt(), -0.0]],
            vec![vec![0.577215664901532], vec![-1.2345678901234567e100]],
        )
        .unwrap();
        let file = CloudFile::xyz(dir.path().join("c.xyz"));
        write_cloud(&cloud, &file).unwrap();
        let back = read_cloud(&file).unwrap();
        for (a, b) in cloud.points().iter().zip(back.points()) {
            for d in 0..3 {
                assert_eq!(a[d].to_bits(), b[d].to_bits());
            }
        }
        for (a, b) in cloud.features().unwrap().iter().zip(back.features().unwrap()) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn flow_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let flow = FlowField::new(vec![[1e-300, 0.1 + 0.2, -5.5]]).unwrap();
        let path = dir.path().join("f.flow");
        write_flow(&flow, &path).unwrap();
        let back = read_flow(&path).unwrap();
        for (a, b) in flow.vectors().iter().zip(back.vectors()) {
            for d in 0..3 {
                assert_eq!(a[d].to_bits(), b[d].to_bits());
            }
        }
    }

    #[test]
    fn flow_file_must_have_three_columns() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.flow");
        fs::write(&path, "1 2 3 4\n").unwrap();
        assert!(matches!(read_flow(&path), Err(Error::Parse { line: 1, .. })));
        fs::write(&path, "").unwrap();
        assert!(matches!(read_flow(&path), Err(Error::Dimension(_))));
    }

    #[test]
    fn ply_roundtrip_and_extra_properties() {
        let dir = tempdir().unwrap();
        let cloud = PointCloud::new(vec![[0.5, 1.5, -2.5], [0.0, 0.25, 8.0]]).unwrap();
        let file = CloudFile::ply(dir.path().join("c.ply"));
        write_cloud(&cloud, &file).unwrap();
        let back = read_cloud(&file).unwrap();
        assert_eq!(cloud.points(), back.points());

        // extra vertex properties are ignored; face data after vertices too
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\n\
                    element vertex 2\nproperty float nx\nproperty float x\n\
                    property float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n9 1 2 3\n9 4 5 6\n3 0 1 0\n";
        let parsed = parse_ply_cloud(text).unwrap();
        assert_eq!(parsed.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn ply_errors_carry_line_numbers() {
        assert!(matches!(
            parse_ply_cloud("not a ply\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let binary = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(parse_ply_cloud(binary), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn metrics_block_roundtrip() {
        let m = FlowMetrics {
            epe3d: 0.12345,
            acc3d_strict: 0.5,
            acc3d_relaxed: 0.75,
            outliers3d: 0.25,
        };
        let text = format_metrics(&m);
        let back = parse_metrics(&text).unwrap();
        assert_eq!(m.epe3d.to_bits(), back.epe3d.to_bits());
        assert_eq!(m.acc3d_strict, back.acc3d_strict);
        assert_eq!(m.acc3d_relaxed, back.acc3d_relaxed);
        assert_eq!(m.outliers3d, back.outliers3d);
    }

    #[test]
    fn auto_format_picks_ply_by_extension() {
        assert_eq!(CloudFile::auto("a.ply").format, CloudFormat::PlyAscii);
        assert_eq!(CloudFile::auto("a.PLY").format, CloudFormat::PlyAscii);
        assert_eq!(CloudFile::auto("a.xyz").format, CloudFormat::XyzText);
        assert_eq!(CloudFile::auto("a.txt").format, CloudFormat::XyzText);
    }

    #[test]
    fn bench_rows_have_header_arity() {
        let m = FlowMetrics { epe3d: 0.1, acc3d_strict: 1.0, acc3d_relaxed: 1.0, outliers3d: 0.0 };
        let cols = BENCH_CSV_HEADER.split(',').count();
        assert_eq!(format_bench_row("cs", "42", "ok", &m, 17).split(',').count(), cols);
        assert_eq!(format_bench_failure("cd", "42").split(',').count(), cols);
    }
}
