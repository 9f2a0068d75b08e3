//! CSV ingestion (loss, Raman gain, throughput curve, NLI tables) and
//! artifact emission (SPP, noise and result tables, optimizer history).

use crate::error::{Error, Result};
use crate::gsnr::{ChannelResult, ThroughputCurve};
use crate::link::{mw_to_dbm, Lightwave, LossTable, RamanGainProfile};
use crate::noise::NoiseBudget;
use crate::solver::PowerMatrix;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            path.display().to_string(),
            format!("line {line}: not a number: {field:?}"),
        )
    })
}

/// Fiber loss table CSV: header `f_thz,loss_db_km`.
pub fn load_loss_csv(path: &Path) -> Result<LossTable> {
    let text = read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("f_thz")) {
            continue;
        }
        let mut parts = line.split(',');
        let f = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        let l = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        samples.push((f, l));
    }
    LossTable::new(samples)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Raman gain CSV: metadata line `f_ref_thz=<value>`, then header
/// `df_thz,cr_per_w_km`.
pub fn load_raman_csv(path: &Path) -> Result<RamanGainProfile> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let f_ref = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let Some(value) = line.strip_prefix("f_ref_thz=") else {
                    return Err(Error::parse(
                        path.display().to_string(),
                        format!("line {}: expected metadata line f_ref_thz=<value>", i + 1),
                    ));
                };
                break parse_f64(path, i + 1, value)?;
            }
            None => {
                return Err(Error::parse(path.display().to_string(), "empty file"));
            }
        }
    };
    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with("df_thz") {
            continue;
        }
        let mut parts = line.split(',');
        let df = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        let g = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        samples.push((df, g));
    }
    RamanGainProfile::new(f_ref, samples)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Throughput curve CSV: header `gsnr_db,tput_gbps`.
pub fn load_throughput_curve(path: &Path) -> Result<ThroughputCurve> {
    let text = read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("gsnr_db") {
            continue;
        }
        let mut parts = line.split(',');
        let g = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        let t = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        samples.push((g, t));
    }
    ThroughputCurve::new(samples)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// NLI table CSV: header `channel_id,gsnr_nli_db`.
pub fn load_nli_table(path: &Path) -> Result<BTreeMap<u32, f64>> {
    let text = read_to_string(path)?;
    let mut table = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("channel_id") {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts
            .next()
            .unwrap_or("")
            .trim()
            .parse::<u32>()
            .map_err(|_| {
                Error::parse(path.display().to_string(), format!("line {}: bad channel id", i + 1))
            })?;
        let g = parse_f64(path, i + 1, parts.next().unwrap_or(""))?;
        table.insert(id, g);
    }
    Ok(table)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(f))
}

/// SPP CSV: columns `z_km, lw_<id>_mW...`, one row per grid point.
/// `db_domain` switches the power columns to dBm (`lw_<id>_dBm`).
pub fn write_spp_csv(
    path: &Path,
    matrix: &PowerMatrix,
    lightwaves: &[Lightwave],
    dz_km: f64,
    db_domain: bool,
) -> Result<()> {
    let mut w = create(path)?;
    let unit = if db_domain { "dBm" } else { "mW" };
    let header: Vec<String> = std::iter::once("z_km".to_string())
        .chain(lightwaves.iter().map(|lw| format!("lw_{}_{unit}", lw.id)))
        .collect();
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for m in 0..matrix.n_points() {
        let mut row = Vec::with_capacity(lightwaves.len() + 1);
        row.push(format!("{:.6}", m as f64 * dz_km));
        for n in 0..matrix.n_lightwaves() {
            let v = matrix.values[(n, m)];
            let v = if db_domain { mw_to_dbm(v) } else { v };
            row.push(format!("{v:.12e}"));
        }
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Noise report CSV:
/// `channel_id,f_thz,p_ase_dfa_mw,p_ase_raman_mw,p_drb_mw,p_nli_mw`.
/// All powers are receiver-referred in a bandwidth equal to the channel
/// symbol rate.
pub fn write_noise_csv(path: &Path, channels: &[Lightwave], budget: &NoiseBudget) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "channel_id,f_thz,p_ase_dfa_mw,p_ase_raman_mw,p_drb_mw,p_nli_mw").map_err(io_err)?;
    for (i, lw) in channels.iter().enumerate() {
        writeln!(
            w,
            "{},{:.5},{:.12e},{:.12e},{:.12e},{:.12e}",
            lw.id,
            lw.f,
            budget.p_ase_dfa_mw[i],
            budget.p_ase_raman_mw[i],
            budget.p_drb_mw[i],
            budget.p_nli_mw[i]
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Per-channel results CSV mirroring the assembled channel results.
pub fn write_results_csv(path: &Path, results: &[ChannelResult]) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(
        w,
        "channel_id,f_thz,gsnr_db,osnr_db,osnr_dfa_db,gsnr_nli_db,gsnr_drb_db,throughput_gbps,nonlinear_regime"
    )
    .map_err(io_err)?;
    for r in results {
        writeln!(
            w,
            "{},{:.5},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{}",
            r.channel_id,
            r.f_thz,
            r.gsnr_db,
            r.osnr_db,
            r.osnr_dfa_db,
            r.gsnr_nli_db,
            r.gsnr_drb_db,
            r.throughput_gbps,
            r.nonlinear_regime
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Optimizer history CSV: `eval_idx,f_obj,params...`.
pub fn write_history_csv(
    path: &Path,
    history: &[(usize, f64, Vec<f64>)],
    param_names: &[String],
) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| Error::io(path.display().to_string(), e);
    let header: Vec<String> = ["eval_idx".to_string(), "f_obj".to_string()]
        .into_iter()
        .chain(param_names.iter().cloned())
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err)?;
    for (idx, f_obj, params) in history {
        let mut row = vec![idx.to_string(), format!("{f_obj:.6}")];
        row.extend(params.iter().map(|p| format!("{p:.10}")));
        writeln!(w, "{}", row.join(",")).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Round-trip loader for SPP CSVs (mW variant), mostly for tests and
/// external tooling.
pub fn load_spp_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let text = read_to_string(path)?;
    let mut z = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if i == 0 {
            let n = line.split(',').count() - 1;
            columns = vec![Vec::new(); n];
            continue;
        }
        let mut parts = line.split(',');
        z.push(parse_f64(path, i + 1, parts.next().unwrap_or(""))?);
        for (c, field) in parts.enumerate() {
            columns[c].push(parse_f64(path, i + 1, field)?);
        }
    }
    Ok((z, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn loss_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        std::fs::write(&path, "f_thz,loss_db_km\n190.0,0.2\n200.0,0.3\n").unwrap();
        let table = load_loss_csv(&path).unwrap();
        assert_eq!(table.loss_db_km(195.0).unwrap(), 0.25);
    }

    #[test]
    fn raman_csv_requires_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raman.csv");
        std::fs::write(&path, "df_thz,cr_per_w_km\n0,0\n13.2,0.39\n").unwrap();
        assert!(load_raman_csv(&path).is_err());
        std::fs::write(
            &path,
            "f_ref_thz=206.5\ndf_thz,cr_per_w_km\n0,0\n13.2,0.39\n30,0\n",
        )
        .unwrap();
        let profile = load_raman_csv(&path).unwrap();
        assert_eq!(profile.f_ref, 206.5);
        assert_eq!(profile.value(13.2), 0.39);
    }

    #[test]
    fn spp_csv_shape_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spp.csv");
        let matrix = PowerMatrix {
            values: array![[1.0, 0.5, 0.25], [2.0, 1.0, 0.5]],
        };
        let lws = vec![
            Lightwave::channel(0, 193.0, 1.0, "C", 100.0, 0.1),
            Lightwave::channel(7, 194.0, 2.0, "C", 100.0, 0.1),
        ];
        write_spp_csv(&path, &matrix, &lws, 0.5, false).unwrap();
        let (z, cols) = load_spp_csv(&path).unwrap();
        assert_eq!(z, vec![0.0, 0.5, 1.0]);
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0], vec![1.0, 0.5, 0.25]);
        assert_eq!(cols[1], vec![2.0, 1.0, 0.5]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("z_km,lw_0_mW,lw_7_mW"));
    }

    #[test]
    fn line_anchored_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        std::fs::write(&path, "f_thz,loss_db_km\n190.0,0.2\nnope,0.3\n").unwrap();
        let err = load_loss_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line 3"), "got: {err}");
    }
}
