//! Output-file formats: columnar CSV for paths and tables, JSON for
//! summaries and reports. Every file records the seed and the stream
//! policy in its header, and all writers are deterministic functions of
//! their inputs, so reruns with one configuration reproduce output files
//! byte-for-byte (the run manifest, which carries wall time, is the one
//! deliberate exception).

use std::io::{self, Write};

use serde::Serialize;

use crate::branching::ExcursionAtom;
use crate::flows::LabeledPathBundle;
use crate::scsm::MeasurePath;
use crate::sdsm::ConvergenceRow;
use crate::stats::ComparisonReport;

/// How replicate randomness is addressed, recorded in every output.
pub const STREAM_POLICY: &str = "counter-based; replicate k draws from stream (seed, k)";

fn header_comment(w: &mut impl Write, seed: u64) -> io::Result<()> {
    writeln!(w, "# seed={seed} stream_policy=\"{STREAM_POLICY}\"")
}

/// Columnar bundle CSV: `time, pos_1..pos_m, group_1..group_m`.
pub fn write_bundle_csv(
    w: &mut impl Write,
    bundle: &LabeledPathBundle,
    seed: u64,
) -> io::Result<()> {
    header_comment(w, seed)?;
    let m = bundle.labels();
    write!(w, "time")?;
    for i in 1..=m {
        write!(w, ",pos_{i}")?;
    }
    for i in 1..=m {
        write!(w, ",group_{i}")?;
    }
    writeln!(w)?;
    for k in 0..bundle.n_times() {
        write!(w, "{}", k as f64 * bundle.step)?;
        for label in 0..m {
            write!(w, ",{}", bundle.position(label, k))?;
        }
        for label in 0..m {
            write!(w, ",{}", bundle.group(k, label))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// JSON bundle summary: merge times, seed/stream info, grid metadata.
pub fn write_bundle_summary(
    w: &mut impl Write,
    bundle: &LabeledPathBundle,
    seed: u64,
    stream_id: u64,
) -> io::Result<()> {
    let summary = bundle.summary(seed, stream_id);
    serde_json::to_writer_pretty(&mut *w, &summary)?;
    writeln!(w)
}

/// Long-format measure path CSV: `time, atom_id, position, mass, group_id`.
pub fn write_measure_path_csv(w: &mut impl Write, path: &MeasurePath, seed: u64) -> io::Result<()> {
    header_comment(w, seed)?;
    writeln!(w, "time,atom_id,position,mass,group_id")?;
    for (k, &t) in path.times.iter().enumerate() {
        for atom in &path.atoms {
            if path.prune_dead && atom.masses[k] == 0.0 {
                continue;
            }
            writeln!(
                w,
                "{t},{},{},{},{}",
                atom.label, atom.positions[k], atom.masses[k], atom.groups[k]
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct MeasurePathSummary {
    pub seed: u64,
    pub stream_policy: String,
    pub times: Vec<f64>,
    pub total_mass: Vec<f64>,
    pub atom_count: Vec<usize>,
}

pub fn measure_path_summary(path: &MeasurePath, seed: u64) -> MeasurePathSummary {
    MeasurePathSummary {
        seed,
        stream_policy: STREAM_POLICY.into(),
        times: path.times.clone(),
        total_mass: (0..path.n_times()).map(|k| path.total_mass_at(k)).collect(),
        atom_count: (0..path.n_times()).map(|k| path.atom_count_at(k)).collect(),
    }
}

pub fn write_measure_path_summary(
    w: &mut impl Write,
    path: &MeasurePath,
    seed: u64,
) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, &measure_path_summary(path, seed))?;
    writeln!(w)
}

#[derive(Debug, Serialize)]
struct EnsembleAtomRecord {
    location: f64,
    initial_mass: f64,
    death_time: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EnsembleReport {
    seed: u64,
    stream_policy: String,
    cutoff: f64,
    count: usize,
    atoms: Vec<EnsembleAtomRecord>,
}

/// JSON excursion-ensemble report: cutoff, count, per-atom location,
/// initial mass and realized death time.
pub fn write_ensemble_json(
    w: &mut impl Write,
    cutoff: f64,
    atoms: &[ExcursionAtom],
    seed: u64,
) -> io::Result<()> {
    let report = EnsembleReport {
        seed,
        stream_policy: STREAM_POLICY.into(),
        cutoff,
        count: atoms.len(),
        atoms: atoms
            .iter()
            .map(|a| EnsembleAtomRecord {
                location: a.location,
                initial_mass: a.mass_path.first().copied().unwrap_or(0.0),
                death_time: a.death_time,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut *w, &report)?;
    writeln!(w)
}

/// Plot-ready convergence table: `theta, phi_id, ks, n, seed`.
pub fn write_convergence_csv(w: &mut impl Write, rows: &[ConvergenceRow]) -> io::Result<()> {
    if let Some(first) = rows.first() {
        header_comment(w, first.seed)?;
    }
    writeln!(w, "theta,phi_id,ks,n,seed")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.theta, r.phi_id, r.ks, r.n, r.seed)?;
    }
    Ok(())
}

/// One JSON object per line, one line per comparison.
pub fn write_report_jsonl(w: &mut impl Write, reports: &[ComparisonReport]) -> io::Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub stream_policy: String,
    pub config: serde_json::Value,
    /// Wall-clock seconds; the only non-reproducible field in any output.
    pub wall_seconds: f64,
}

impl Manifest {
    pub fn new(seed: u64, config: serde_json::Value, wall_seconds: f64) -> Self {
        Manifest {
            tool: "coalflow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            stream_policy: STREAM_POLICY.into(),
            config,
            wall_seconds,
        }
    }
}

pub fn write_manifest(w: &mut impl Write, manifest: &Manifest) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, manifest)?;
    writeln!(w)
}
