//! CSV tables and atomic file output.

use std::io::{self, Write};
use std::path::Path;

use crate::basin::{BasinGeometry, BasinSlice, LyapunovEvaluation, LyapunovStatus};
use crate::continuation::SteadyPath;
use crate::map::State;

/// Shortest round-trip representation, always with a decimal point or exponent.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_bytes(header: Vec<String>, rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&header).expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

pub fn trace_csv(path: &SteadyPath) -> Vec<u8> {
    let m = path.polyline.control_dim();
    let n = path.samples[0].steady.x.len();
    let mut header = vec!["t".to_string()];
    header.extend(indexed("alpha", m));
    header.extend(indexed("x", n));
    header.extend(["spectral_radius", "operator_norm", "stable"].map(String::from));
    let rows = path
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![num(s.t)];
            row.extend(s.alpha.iter().map(|&v| num(v)));
            row.extend(s.steady.x.iter().map(|&v| num(v)));
            row.push(num(s.steady.spectral_radius));
            row.push(num(s.steady.operator_norm));
            row.push(if s.steady.stability.is_stable() { "1" } else { "0" }.to_string());
            row
        })
        .collect();
    csv_bytes(header, rows)
}

pub fn basin_csv(slice: &BasinSlice) -> Vec<u8> {
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    match &slice.geometry {
        BasinGeometry::Interval { lo, hi, lo_open_ended, hi_open_ended } => {
            let m = slice.target.alpha.len();
            let mut header: Vec<String> = indexed("alpha", m).collect();
            header.extend(["lo", "hi", "lo_open_ended", "hi_open_ended"].map(String::from));
            let mut row: Vec<String> = slice.target.alpha.iter().map(|&v| num(v)).collect();
            row.extend([num(*lo), num(*hi), flag(*lo_open_ended), flag(*hi_open_ended)]);
            csv_bytes(header, vec![row])
        }
        BasinGeometry::Star { center, rays } => {
            let n = center.len();
            let mut header = vec!["theta_or_dir_index".to_string()];
            header.extend(indexed("d", n));
            header.extend(["radius", "open_ended"].map(String::from));
            let rows = rays
                .iter()
                .enumerate()
                .map(|(j, ray)| {
                    let first = if n == 2 { num(ray.direction[1].atan2(ray.direction[0])) } else { j.to_string() };
                    let mut row = vec![first];
                    row.extend(ray.direction.iter().map(|&v| num(v)));
                    row.extend([num(ray.radius), flag(ray.open_ended)]);
                    row
                })
                .collect();
            csv_bytes(header, rows)
        }
        BasinGeometry::GridMask { lower, upper, resolution, cells } => {
            let n = lower.len();
            let mut header: Vec<String> = indexed("x", n).collect();
            header.push("inside".into());
            let rows = cells
                .iter()
                .enumerate()
                .map(|(index, inside)| {
                    let mut rest = index;
                    let mut row = Vec::with_capacity(n + 1);
                    for axis in 0..n {
                        let width = (upper[axis] - lower[axis]) / *resolution as f64;
                        row.push(num(lower[axis] + ((rest % resolution) as f64 + 0.5) * width));
                        rest /= resolution;
                    }
                    row.push(flag(*inside));
                    row
                })
                .collect();
            csv_bytes(header, rows)
        }
    }
}

pub fn lyapunov_csv(points: &[(State, LyapunovEvaluation)]) -> Vec<u8> {
    let n = points.first().map_or(1, |(x, _)| x.len());
    let mut header: Vec<String> = indexed("x", n).collect();
    header.extend(["V", "status"].map(String::from));
    let rows = points
        .iter()
        .map(|(x, eval)| {
            let mut row: Vec<String> = x.iter().map(|&v| num(v)).collect();
            row.push(num(eval.value));
            row.push(
                match eval.status {
                    LyapunovStatus::Converged => "C",
                    LyapunovStatus::Diverged(_) => "D",
                    LyapunovStatus::Inconclusive => "I",
                }
                .to_string(),
            );
            row
        })
        .collect();
    csv_bytes(header, rows)
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
