//! On-disk artifacts: field snapshots and tables as CSV, the per-step
//! diagnostics stream as JSON lines, manifests as JSON.
//!
//! Floats are written in shortest round-trip form, so identical runs give
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{cell_velocity, mach_field};
use crate::discrete_ops::div_cells;
use crate::error::{Error, Result};
use crate::fields::State;
use crate::mesh::Mesh;
use crate::reference::ConservativeState1D;

/// Column sets of the field snapshots.
pub const FIELDS_1D_COLUMNS: [&str; 5] = ["x", "rho", "u", "theta", "rho_theta"];
pub const FIELDS_2D_COLUMNS: [&str; 11] = [
    "x",
    "y",
    "rho",
    "u_center",
    "v_center",
    "theta",
    "mach",
    "mach_over_eps",
    "mach_normalized",
    "rho_theta",
    "div_u",
];
pub const FACES_COLUMNS: [&str; 5] = ["axis", "index", "x", "y", "u"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Writes `rows` under `header`, one CSV record per row.
pub fn write_csv<R: AsRef<[f64]>>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    let mut buf: Vec<String> = Vec::with_capacity(header.len());
    for row in rows {
        buf.clear();
        for v in row.as_ref() {
            buf.push(v.to_string());
        }
        w.write_record(&buf).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable records (one per line) with a header derived from the field names.
pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Cell-centred snapshot. The 2D layout is row-major with `x` fastest.
pub fn write_fields_csv(path: &Path, mesh: &Mesh, state: &State, eps: f64, gamma: f64) -> Result<()> {
    let rt = state.theta_total();
    let ux = cell_velocity(mesh, state, 0);
    match mesh.dim() {
        1 => write_csv(
            path,
            &FIELDS_1D_COLUMNS,
            (0..mesh.n_cells()).map(|c| {
                [mesh.cell_center(c)[0], state.rho[c], ux[c], state.theta[c], rt[c]]
            }),
        ),
        2 => {
            let uy = cell_velocity(mesh, state, 1);
            let div = div_cells(mesh, &state.u);
            let mach = mach_field(mesh, state, gamma);
            let peak = mach.max();
            let norm = if peak > 0.0 { 1.0 / peak } else { 0.0 };
            write_csv(
                path,
                &FIELDS_2D_COLUMNS,
                (0..mesh.n_cells()).map(|c| {
                    let x = mesh.cell_center(c);
                    [
                        x[0],
                        x[1],
                        state.rho[c],
                        ux[c],
                        uy[c],
                        state.theta[c],
                        mach[c],
                        mach[c] / eps,
                        mach[c] * norm,
                        rt[c],
                        div[c],
                    ]
                }),
            )
        }
        d => Err(Error::Config(format!("no field writer for dimension {d}"))),
    }
}

/// Raw face velocities, one row per face.
pub fn write_faces_csv(path: &Path, mesh: &Mesh, state: &State) -> Result<()> {
    let rows = (0..mesh.dim()).flat_map(|i| {
        state.u.comp(i).iter().enumerate().map(move |(f, &v)| {
            let x = mesh.face_center(i, f);
            [i as f64, f as f64, x[0], x[1], v]
        })
    });
    write_csv(path, &FACES_COLUMNS, rows)
}

/// Reference profile in the 1D field layout.
pub fn write_reference_csv(path: &Path, s: &ConservativeState1D) -> Result<()> {
    let (u, th) = (s.velocity(), s.theta());
    write_csv(
        path,
        &FIELDS_1D_COLUMNS,
        (0..s.len()).map(|k| [s.x[k], s.rho[k], u[k], th[k], s.theta_total[k]]),
    )
}

/// Append-only JSON-lines writer.
pub struct JsonLines {
    out: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn push<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// File stem for a snapshot at time `t`.
pub fn snapshot_stem(t: f64) -> String {
    format!("t{t:.6}")
}
