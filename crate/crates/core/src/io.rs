//! Snapshot and trajectory persistence.
//!
//! Snapshot file layout: one JSON header line (`dim`, `n_per_axis`,
//! `box_length`, `time`, `fields`, `dtype: "f64le"`, `layout: "row-major"`),
//! then the raw little-endian f64 arrays in declared order. Round trips are
//! bit-exact. A trajectory is a directory of snapshot files plus one
//! `manifest.json` echoing the configuration, times and initial energy.

use crate::error::Error;
use crate::field::{Grid, ScalarField, VectorField};
use crate::solver::{SolverConfig, Trajectory};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub n_per_axis: usize,
    pub box_length: f64,
    pub time: f64,
    pub fields: Vec<String>,
    pub dtype: String,
    pub layout: String,
    /// Per-field slice count for frame dumps (each field array then holds
    /// `slices * n_per_axis^dim` values); absent for plain snapshots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    /// Frame metadata for local-frame dumps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub base_time: f64,
    pub base_point: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub s_times: Vec<f64>,
}

fn write_with_header(path: &Path, header: &SnapshotHeader, fields: &[(&str, &[f64])]) -> Result<()> {
    let per_field = header.n_per_axis.pow(header.dim as u32) * header.slices.unwrap_or(1);
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for (name, data) in fields {
        if data.len() != per_field {
            return Err(Error::ShapeMismatch(format!(
                "field {name}: {} values, expected {per_field}",
                data.len()
            )));
        }
        for v in data.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write named field arrays with a one-line JSON header.
pub fn write_snapshot(
    path: &Path,
    grid: &Grid,
    time: f64,
    fields: &[(&str, &[f64])],
) -> Result<()> {
    let header = SnapshotHeader {
        dim: grid.dim(),
        n_per_axis: grid.n(),
        box_length: grid.box_length(),
        time,
        fields: fields.iter().map(|(n, _)| n.to_string()).collect(),
        dtype: "f64le".into(),
        layout: "row-major".into(),
        slices: None,
        frame: None,
    };
    write_with_header(path, &header, fields)
}

/// Read a snapshot back; validates the header, dtype and payload size.
pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<Vec<f64>>)> {
    let bytes = fs::read(path)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("missing header line".into()))?;
    let header: SnapshotHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "f64le" {
        return Err(Error::UnsupportedFormat(format!("dtype {}", header.dtype)));
    }
    if header.layout != "row-major" {
        return Err(Error::UnsupportedFormat(format!("layout {}", header.layout)));
    }
    if header.frame.is_none() {
        // plain snapshots live on a valid grid
        Grid::new(header.dim, header.n_per_axis, header.box_length)?;
    }
    let cells = header.n_per_axis.pow(header.dim as u32) * header.slices.unwrap_or(1);
    let expected = header.fields.len() * cells * 8;
    let payload = &bytes[newline + 1..];
    if payload.len() != expected {
        return Err(Error::SizeMismatch { expected, found: payload.len() });
    }
    let mut out = Vec::with_capacity(header.fields.len());
    let mut cursor = payload;
    for _ in 0..header.fields.len() {
        let mut field = Vec::with_capacity(cells);
        for _ in 0..cells {
            let mut buf = [0u8; 8];
            cursor.read_exact(&mut buf)?;
            field.push(f64::from_le_bytes(buf));
        }
        out.push(field);
    }
    Ok((header, out))
}

/// Dump a local frame in the snapshot format: the `v` components and `P`
/// on the `(s, y)` lattice, with the frame metadata in the header.
pub fn write_frame_dump(path: &Path, frame: &crate::frame::FlowFrame, dim: usize) -> Result<()> {
    let y_total = frame.y_count(dim);
    let slices = frame.s_times.len();
    let mut arrays: Vec<Vec<f64>> = vec![Vec::with_capacity(slices * y_total); dim + 1];
    for k in 0..slices {
        for j in 0..y_total {
            for (c, arr) in arrays.iter_mut().enumerate().take(dim) {
                arr.push(frame.v_at(k, j, c, dim));
            }
            arrays[dim].push(frame.p_at(k, j, dim));
        }
    }
    let mut names: Vec<String> = (0..dim).map(|c| format!("v{c}")).collect();
    names.push("p".into());
    let header = SnapshotHeader {
        dim,
        n_per_axis: frame.y_per_axis,
        box_length: 4.0, // frame coordinates span [-2, 2]
        time: frame.base_time,
        fields: names.clone(),
        dtype: "f64le".into(),
        layout: "row-major".into(),
        slices: Some(slices),
        frame: Some(FrameMeta {
            base_time: frame.base_time,
            base_point: frame.base_point.clone(),
            epsilon: frame.epsilon,
            delta: frame.delta,
            gamma: frame.gamma,
            s_times: frame.s_times.clone(),
        }),
    };
    let fields: Vec<(&str, &[f64])> = names
        .iter()
        .zip(&arrays)
        .map(|(n, a)| (n.as_str(), a.as_slice()))
        .collect();
    write_with_header(path, &header, &fields)
}

/// Write a velocity snapshot with component names u0, u1, ...
pub fn write_vector_snapshot(path: &Path, time: f64, u: &VectorField) -> Result<()> {
    let names: Vec<String> = (0..u.grid().dim()).map(|i| format!("u{i}")).collect();
    let fields: Vec<(&str, &[f64])> = names
        .iter()
        .zip(u.components())
        .map(|(n, c)| (n.as_str(), c.samples()))
        .collect();
    write_snapshot(path, u.grid(), time, &fields)
}

pub fn read_vector_snapshot(path: &Path) -> Result<(f64, VectorField)> {
    let (header, data) = read_snapshot(path)?;
    let grid = Grid::new(header.dim, header.n_per_axis, header.box_length)?;
    if data.len() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} velocity components, found {}",
            grid.dim(),
            data.len()
        )));
    }
    let comps: Vec<ScalarField> = data
        .into_iter()
        .map(|samples| ScalarField::from_samples(grid, samples))
        .collect();
    Ok((header.time, VectorField::new(comps)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    pub dim: usize,
    pub n_per_axis: usize,
    pub box_length: f64,
    pub config: SolverConfig,
    pub times: Vec<f64>,
    pub initial_energy: f64,
    pub cumulative_dissipation: Vec<f64>,
    pub seed: Option<u64>,
    pub snapshots: Vec<String>,
}

/// Persist a trajectory as a directory of snapshot files plus a manifest.
pub fn save_trajectory(dir: &Path, traj: &Trajectory, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let name = format!("snapshot_{i:05}.bin");
        write_vector_snapshot(&dir.join(&name), traj.time(i), traj.snapshot(i))?;
        names.push(name);
    }
    let grid = traj.grid();
    let manifest = TrajectoryManifest {
        dim: grid.dim(),
        n_per_axis: grid.n(),
        box_length: grid.box_length(),
        config: traj.config().clone(),
        times: traj.times().to_vec(),
        initial_energy: traj.initial_energy(),
        cumulative_dissipation: traj.cumulative_dissipation().to_vec(),
        seed,
        snapshots: names,
    };
    let file = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(())
}

/// Load a trajectory saved by `save_trajectory`, validating every snapshot.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let manifest_bytes = fs::read(dir.join("manifest.json"))?;
    let manifest: TrajectoryManifest = serde_json::from_slice(&manifest_bytes)?;
    let mut times = Vec::with_capacity(manifest.snapshots.len());
    let mut snaps = Vec::with_capacity(manifest.snapshots.len());
    for name in &manifest.snapshots {
        let (t, u) = read_vector_snapshot(&dir.join(name))?;
        times.push(t);
        snaps.push(u);
    }
    if times.len() != manifest.times.len() {
        return Err(Error::ShapeMismatch("manifest/snapshot count mismatch".into()));
    }
    Ok(Trajectory::from_snapshots(times, snaps, manifest.config))
}
