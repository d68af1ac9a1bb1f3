use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::campaign::{CampaignLog, CampaignStatus, TrialEntry};
use super::config::CampaignConfig;
use crate::error::{Error, Result};
use crate::gp::KernelParams;
use crate::plant::PlantSpec;
use crate::signal::{load_reference, save_reference, Provenance};
use crate::table::{fmt_f64, parse_numeric, read_text};

pub const TRIALS_HEADER: [&str; 6] = ["j", "err_norm", "rel_raw", "eps", "wall_s", "P_norm"];
const TRAJECTORY_HEADER: [&str; 4] = ["j", "n", "u", "y"];

const TRIALS_FILE: &str = "trials.csv";
const TRAJECTORY_FILE: &str = "trajectories.csv";
const SUMMARY_FILE: &str = "campaign.json";
const REFERENCE_FILE: &str = "reference.csv";

#[derive(Debug, Serialize, Deserialize)]
struct TrialMeta {
    j: usize,
    reseeded: bool,
    hyperparams: Vec<KernelParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    config: CampaignConfig,
    plant: PlantSpec,
    reference_provenance: Provenance,
    reference_norm: f64,
    repetitive_floor: f64,
    input_variance: f64,
    status: CampaignStatus,
    trials_to_50: Option<usize>,
    trials_to_80: Option<usize>,
    final_input: Option<Vec<f64>>,
    trials: Vec<TrialMeta>,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-trial series as CSV text.
pub(crate) fn trials_csv(entries: &[TrialEntry]) -> String {
    let mut out = TRIALS_HEADER.join(",") + "\n";
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.j,
            fmt_f64(e.err_norm),
            fmt_f64(e.rel_raw),
            fmt_f64(e.eps),
            fmt_f64(e.wall_s),
            fmt_f64(e.p_norm)
        ));
    }
    out
}

/// Write a campaign directory: per-trial CSV, trajectories, reference and JSON summary.
pub fn save_campaign(log: &CampaignLog, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(TRIALS_FILE), &trials_csv(&log.entries))?;

    let mut traj = TRAJECTORY_HEADER.join(",") + "\n";
    for e in &log.entries {
        for k in 0..e.input.len() {
            traj.push_str(&format!("{},{k},{},{}\n", e.j, fmt_f64(e.input[k]), fmt_f64(e.output[k])));
        }
    }
    write_atomic(&dir.join(TRAJECTORY_FILE), &traj)?;
    save_reference(&log.reference, &dir.join(REFERENCE_FILE))?;

    let summary = Summary {
        config: log.config.clone(),
        plant: log.plant.clone(),
        reference_provenance: log.reference.provenance.clone(),
        reference_norm: log.reference.norm(),
        repetitive_floor: log.repetitive_floor,
        input_variance: log.input_variance,
        status: log.status.clone(),
        trials_to_50: log.trials_to(0.5),
        trials_to_80: log.trials_to(0.8),
        final_input: log.final_input.as_ref().map(|u| u.iter().copied().collect()),
        trials: log
            .entries
            .iter()
            .map(|e| TrialMeta {
                j: e.j,
                reseeded: e.reseeded,
                hyperparams: e.hyperparams.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&dir.join(SUMMARY_FILE), &(json + "\n"))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn as_index(path: &Path, line: u64, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(parse_error(path, line, format!("expected a nonnegative integer, found {v}")))
    }
}

/// Rows of a per-trial CSV, `(j, err_norm, rel_raw, eps, wall_s, P_norm)`.
pub fn load_trials_csv(path: &Path) -> Result<Vec<(usize, [f64; 5])>> {
    let text = read_text(path)?;
    let rows = parse_numeric(path, &text, &TRIALS_HEADER, &[])?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i as u64 + 2;
            let j = as_index(path, line, row[0])?;
            Ok((j, [row[1], row[2], row[3], row[4], row[5]]))
        })
        .collect()
}

/// Load a directory written by [`save_campaign`].
pub fn load_campaign(dir: &Path) -> Result<CampaignLog> {
    let summary_path = dir.join(SUMMARY_FILE);
    let text = read_text(&summary_path)?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| parse_error(&summary_path, e.line() as u64, e.to_string()))?;

    let trials_path = dir.join(TRIALS_FILE);
    let rows = load_trials_csv(&trials_path)?;
    if rows.len() != summary.trials.len() {
        return Err(parse_error(
            &trials_path,
            rows.len() as u64 + 1,
            format!("{} trial rows, summary lists {}", rows.len(), summary.trials.len()),
        ));
    }

    let traj_path = dir.join(TRAJECTORY_FILE);
    let traj_text = read_text(&traj_path)?;
    let traj = parse_numeric(&traj_path, &traj_text, &TRAJECTORY_HEADER, &[])?;
    let mut inputs: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    let mut outputs: Vec<Vec<f64>> = vec![Vec::new(); rows.len()];
    for (i, row) in traj.iter().enumerate() {
        let line = i as u64 + 2;
        let j = as_index(&traj_path, line, row[0])?;
        let n = as_index(&traj_path, line, row[1])?;
        let slot = rows
            .iter()
            .position(|(rj, _)| *rj == j)
            .ok_or_else(|| parse_error(&traj_path, line, format!("trial {j} not in {TRIALS_FILE}")))?;
        if n != inputs[slot].len() {
            return Err(parse_error(&traj_path, line, format!("sample {n} out of sequence")));
        }
        inputs[slot].push(row[2]);
        outputs[slot].push(row[3]);
    }

    let mut reference = load_reference(&dir.join(REFERENCE_FILE))?;
    reference.provenance = summary.reference_provenance;

    let entries = rows
        .into_iter()
        .zip(summary.trials)
        .zip(inputs.into_iter().zip(outputs))
        .map(|(((j, v), meta), (u, y))| {
            if meta.j != j {
                return Err(parse_error(&summary_path, 0, format!("trial {} listed where {j} expected", meta.j)));
            }
            Ok(TrialEntry {
                j,
                err_norm: v[0],
                rel_raw: v[1],
                eps: v[2],
                wall_s: v[3],
                p_norm: v[4],
                hyperparams: meta.hyperparams,
                reseeded: meta.reseeded,
                input: DVector::from_vec(u),
                output: DVector::from_vec(y),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CampaignLog {
        config: summary.config,
        plant: summary.plant,
        reference,
        repetitive_floor: summary.repetitive_floor,
        input_variance: summary.input_variance,
        entries,
        final_input: summary.final_input.map(DVector::from_vec),
        status: summary.status,
    })
}

/// Tidy learning-curve and trajectory tables for a set of campaigns.
pub fn write_plotdata(campaigns: &[(String, CampaignLog)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut curves = String::from("campaign,plant,variant,j,eps,rel_raw,err_norm\n");
    let mut traj = String::from("campaign,plant,variant,j,n,t,r,y,u\n");
    for (name, log) in campaigns {
        let plant = log.plant.id;
        let variant = log.config.variant;
        for e in &log.entries {
            curves.push_str(&format!(
                "{name},{plant},{variant},{},{},{},{}\n",
                e.j,
                fmt_f64(e.eps),
                fmt_f64(e.rel_raw),
                fmt_f64(e.err_norm)
            ));
            for k in 0..e.output.len() {
                traj.push_str(&format!(
                    "{name},{plant},{variant},{},{k},{},{},{},{}\n",
                    e.j,
                    fmt_f64(k as f64 / log.reference.fs),
                    fmt_f64(log.reference.r[k]),
                    fmt_f64(e.output[k]),
                    fmt_f64(e.input[k])
                ));
            }
        }
    }
    let curves_path = out_dir.join("learning_curves.csv");
    let traj_path = out_dir.join("trajectories.csv");
    std::fs::write(&curves_path, curves)?;
    std::fs::write(&traj_path, traj)?;
    Ok(vec![curves_path, traj_path])
}
