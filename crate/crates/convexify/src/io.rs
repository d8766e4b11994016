//! CSV and JSON artifact writers plus defensive readers.
//!
//! Every data artifact starts with `#`-prefixed meta lines that embed the
//! config hash and the grid hash, so a file can always be traced back to the
//! run that produced it. Floating-point values are written with 17
//! significant digits, which round-trips `f64` exactly. None of the writers
//! emit timestamps: rerunning with the same config and seed reproduces the
//! files byte for byte (the iteration history is the one exception, since it
//! logs wall-clock times).

use crate::error::{ConvexifyError, Result};
use crate::field::TensorGrid;
use crate::forward::CauchyTraces;
use crate::geometry::{psi_value, DomainGrid};
use crate::optimize::IterRecord;
use crate::verify::LandscapeScan;
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::Path;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Meta lines common to all artifacts.
#[derive(Debug, Clone)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub grid_hash: String,
}

impl ArtifactMeta {
    fn header(&self) -> String {
        format!(
            "# config_hash={} grid_hash={}\n",
            self.config_hash, self.grid_hash
        )
    }
}

fn write_lines(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(content.as_bytes())?;
    Ok(())
}

/// Full grid dump: one row per space-time node with the level-set value,
/// squared Carleman weight and region membership flags.
pub fn write_grid_csv(
    path: &Path,
    domain: &DomainGrid,
    weight: &[f64],
    meta: &ArtifactMeta,
) -> Result<()> {
    let grid = &domain.grid;
    let nd = grid.ndim();
    let mut out = meta.header();
    let mut cols: Vec<String> = (1..nd).map(|k| format!("x{k}")).collect();
    cols.push("t".into());
    cols.extend(
        ["psi", "weight", "in_G", "in_G_eps", "on_gamma"]
            .iter()
            .map(|s| s.to_string()),
    );
    out.push_str(&cols.join(","));
    out.push('\n');
    for p in 0..grid.len {
        let coords = grid.coords(p);
        let psi = psi_value(&coords, &domain.spec);
        let mut row: Vec<String> = coords.iter().map(|&v| fmt(v)).collect();
        row.push(fmt(psi));
        row.push(fmt(weight[p]));
        row.push(u8::from(domain.inside_g[p]).to_string());
        row.push(u8::from(domain.inside_g_eps[p]).to_string());
        row.push(u8::from(domain.on_gamma[p]).to_string());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_lines(path, &out)
}

/// Lateral Cauchy traces on the `x1 = 0` face: tangential coordinates, time,
/// and the pair `(g1, g2)`. The noise level and seed ride along in the meta
/// line.
pub fn write_traces_csv(path: &Path, traces: &CauchyTraces, meta: &ArtifactMeta) -> Result<()> {
    let face = &traces.face;
    let nd = face.ndim();
    let mut out = format!(
        "# config_hash={} grid_hash={} delta={} seed={}\n",
        meta.config_hash,
        meta.grid_hash,
        fmt(traces.delta),
        traces.seed
    );
    let mut cols: Vec<String> = (0..nd - 1).map(|k| format!("x{}", k + 2)).collect();
    cols.push("t".into());
    cols.push("g1".into());
    cols.push("g2".into());
    out.push_str(&cols.join(","));
    out.push('\n');
    for q in 0..face.len {
        let coords = face.coords(q);
        let mut row: Vec<String> = coords.iter().map(|&v| fmt(v)).collect();
        row.push(fmt(traces.g1[q]));
        row.push(fmt(traces.g2[q]));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_lines(path, &out)
}

/// Optimizer iteration log. Wall-clock milliseconds make this the one
/// artifact that is not byte-reproducible across reruns.
pub fn write_history_csv(path: &Path, history: &[IterRecord], meta: &ArtifactMeta) -> Result<()> {
    let mut out = meta.header();
    out.push_str("iter,J,grad_norm,step,wall_ms\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iter,
            fmt(r.j),
            fmt(r.grad_norm),
            fmt(r.step),
            fmt(r.wall_ms)
        ));
    }
    write_lines(path, &out)
}

/// Recovered coefficient next to the truth, one row per spatial node.
pub fn write_crec_csv(
    path: &Path,
    spatial: &TensorGrid,
    c_rec: &[f64],
    c_true: &[f64],
    meta: &ArtifactMeta,
) -> Result<()> {
    if c_rec.len() != spatial.len || c_true.len() != spatial.len {
        return Err(ConvexifyError::GridMismatch(format!(
            "coefficient length {} / {} vs {} spatial nodes",
            c_rec.len(),
            c_true.len(),
            spatial.len
        )));
    }
    let mut out = meta.header();
    let mut cols: Vec<String> = (1..=spatial.ndim()).map(|k| format!("x{k}")).collect();
    cols.extend(["c_rec", "c_true", "abs_err"].iter().map(|s| s.to_string()));
    out.push_str(&cols.join(","));
    out.push('\n');
    for s in 0..spatial.len {
        let mut row: Vec<String> = spatial.coords(s).iter().map(|&v| fmt(v)).collect();
        row.push(fmt(c_rec[s]));
        row.push(fmt(c_true[s]));
        row.push(fmt((c_rec[s] - c_true[s]).abs()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_lines(path, &out)
}

/// One-dimensional cost slices along random directions, at zero weight and at
/// the selected weight strength.
pub fn write_landscape_csv(path: &Path, scan: &LandscapeScan, meta: &ArtifactMeta) -> Result<()> {
    let mut out = meta.header();
    out.push_str("direction_id,s,J_lambda0,J_lambdastar\n");
    for r in &scan.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.direction,
            fmt(r.s),
            fmt(r.j_lambda0),
            fmt(r.j_lambdastar)
        ));
    }
    write_lines(path, &out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub final_j: f64,
    pub rel_l2_c: f64,
    pub iters: usize,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow], meta: &ArtifactMeta) -> Result<()> {
    let mut out = meta.header();
    out.push_str("lambda,final_J,rel_L2_c,iters\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt(r.lambda),
            fmt(r.final_j),
            fmt(r.rel_l2_c),
            r.iters
        ));
    }
    write_lines(path, &out)
}

/// JSON report with the identifying hashes folded in at the top level.
pub fn write_json_report<T: Serialize>(path: &Path, report: &T, meta: &ArtifactMeta) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapper<'a, T> {
        config_hash: &'a str,
        grid_hash: &'a str,
        report: &'a T,
    }
    let wrapper = Wrapper {
        config_hash: &meta.config_hash,
        grid_hash: &meta.grid_hash,
        report,
    };
    let text = serde_json::to_string_pretty(&wrapper)
        .map_err(|e| ConvexifyError::Parse(format!("report serialization: {e}")))?;
    write_lines(path, &format!("{text}\n"))
}

/// Parsed numeric CSV: header names plus rows of floats, with the meta lines
/// returned verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericCsv {
    pub meta: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Strict reader for the numeric CSV artifacts written above. Every row must
/// have the header's width and parse as finite floats; anything else is a
/// parse error, never a panic.
pub fn read_numeric_csv(text: &str) -> Result<NumericCsv> {
    let mut meta = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') {
            if header.is_some() {
                return Err(ConvexifyError::Parse(format!(
                    "line {}: meta line after the header",
                    lineno + 1
                )));
            }
            meta.push(line.to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match &header {
            None => {
                if fields.iter().any(|f| f.trim().is_empty()) {
                    return Err(ConvexifyError::Parse(format!(
                        "line {}: empty column name",
                        lineno + 1
                    )));
                }
                header = Some(fields.iter().map(|f| f.trim().to_string()).collect());
            }
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(ConvexifyError::Parse(format!(
                        "line {}: {} fields, expected {}",
                        lineno + 1,
                        fields.len(),
                        h.len()
                    )));
                }
                let mut row = Vec::with_capacity(fields.len());
                for f in fields {
                    let v: f64 = f.trim().parse().map_err(|_| {
                        ConvexifyError::Parse(format!(
                            "line {}: not a number: {f:?}",
                            lineno + 1
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(ConvexifyError::Parse(format!(
                            "line {}: non-finite value {f:?}",
                            lineno + 1
                        )));
                    }
                    row.push(v);
                }
                rows.push(row);
            }
        }
    }
    let header = header
        .ok_or_else(|| ConvexifyError::Parse("missing header line".into()))?;
    Ok(NumericCsv {
        meta,
        header,
        rows,
    })
}

/// Reconstructs Cauchy traces from a parsed traces CSV, validating the node
/// layout against the expected face grid.
pub fn traces_from_csv(csv: &NumericCsv, face: &TensorGrid) -> Result<CauchyTraces> {
    let nd = face.ndim();
    if csv.header.len() != nd + 2 {
        return Err(ConvexifyError::Parse(format!(
            "traces CSV has {} columns, expected {}",
            csv.header.len(),
            nd + 2
        )));
    }
    if csv.rows.len() != face.len {
        return Err(ConvexifyError::GridMismatch(format!(
            "traces CSV has {} rows, expected {} face nodes",
            csv.rows.len(),
            face.len
        )));
    }
    let mut g1 = Vec::with_capacity(face.len);
    let mut g2 = Vec::with_capacity(face.len);
    for (q, row) in csv.rows.iter().enumerate() {
        let coords = face.coords(q);
        for (k, &c) in coords.iter().enumerate() {
            if (row[k] - c).abs() > 1e-9 * (1.0 + c.abs()) {
                return Err(ConvexifyError::GridMismatch(format!(
                    "row {q}: coordinate {k} is {} but the face grid has {c}",
                    row[k]
                )));
            }
        }
        g1.push(row[nd]);
        g2.push(row[nd + 1]);
    }
    let (delta, seed) = parse_trace_meta(&csv.meta);
    Ok(CauchyTraces {
        face: face.clone(),
        g1,
        g2,
        delta,
        seed,
    })
}

fn parse_trace_meta(meta: &[String]) -> (f64, u64) {
    let mut delta = 0.0;
    let mut seed = 0;
    for line in meta {
        for token in line.trim_start_matches('#').split_whitespace() {
            if let Some(v) = token.strip_prefix("delta=") {
                delta = v.parse().unwrap_or(0.0);
            } else if let Some(v) = token.strip_prefix("seed=") {
                seed = v.parse().unwrap_or(0);
            }
        }
    }
    (delta, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{extract_traces, fine_spatial_grid};
    use crate::geometry::{build_domain, GridSpec};
    use crate::model::{oracle_separable, CoefficientSet};
    use tempfile::tempdir;

    fn domain() -> DomainGrid {
        build_domain(&GridSpec {
            n_space: 1,
            a: 0.2,
            d: 0.5,
            t_horizon: 1.0,
            epsilon: 0.03,
            n_x1: 9,
            n_xbar: 9,
            n_t: 9,
            fine_factor: 1,
        })
        .unwrap()
    }

    fn meta() -> ArtifactMeta {
        ArtifactMeta {
            config_hash: "cafe0123cafe0123".into(),
            grid_hash: "beef4567beef4567".into(),
        }
    }

    #[test]
    fn traces_round_trip_exactly() {
        let domain = domain();
        let (fine, offsets) = fine_spatial_grid(&domain, true).unwrap();
        let coeffs = CoefficientSet::isotropic(&fine).with_f(|c| 2.0 + c[0].sin());
        let oracle = oracle_separable(&coeffs, 0.5).unwrap();
        let traces = extract_traces(&domain, &oracle, &fine, &offsets).unwrap();

        let dir = tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        write_traces_csv(&path, &traces, &meta()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let csv = read_numeric_csv(&text).unwrap();
        assert_eq!(csv.header, vec!["t", "g1", "g2"]);
        let back = traces_from_csv(&csv, &traces.face).unwrap();
        // {:.16e} round-trips f64 bit for bit
        assert_eq!(back.g1, traces.g1);
        assert_eq!(back.g2, traces.g2);
        assert_eq!(back.delta, traces.delta);
        assert_eq!(back.seed, traces.seed);
    }

    #[test]
    fn reader_rejects_malformed_input() {
        assert!(read_numeric_csv("").is_err()); // no header
        assert!(read_numeric_csv("a,b\n1.0\n").is_err()); // ragged
        assert!(read_numeric_csv("a,b\n1.0,zebra\n").is_err()); // non-numeric
        assert!(read_numeric_csv("a,b\n1.0,inf\n").is_err()); // non-finite
        assert!(read_numeric_csv("a,b\n1.0,2.0\n# late meta\n").is_err());
        // benign inputs parse
        let ok = read_numeric_csv("# k=v\na, b\n1.0, 2.0\n\n3.0,4.0\n").unwrap();
        assert_eq!(ok.rows.len(), 2);
        assert_eq!(ok.meta.len(), 1);
    }

    #[test]
    fn grid_dump_has_expected_shape() {
        let domain = domain();
        let weight = vec![1.0; domain.grid.len];
        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        write_grid_csv(&path, &domain, &weight, &meta()).unwrap();
        let csv = read_numeric_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(
            csv.header,
            vec!["x1", "t", "psi", "weight", "in_G", "in_G_eps", "on_gamma"]
        );
        assert_eq!(csv.rows.len(), domain.grid.len);
        // membership flags in the dump agree with the masks
        for (p, row) in csv.rows.iter().enumerate() {
            assert_eq!(row[4] != 0.0, domain.inside_g[p]);
        }
    }

    #[test]
    fn history_and_sweep_formats() {
        let dir = tempdir().unwrap();
        let hist = vec![IterRecord {
            iter: 0,
            j: 1.5,
            grad_norm: 0.1,
            step: 1.0,
            wall_ms: 3.25,
        }];
        let hp = dir.path().join("history.csv");
        write_history_csv(&hp, &hist, &meta()).unwrap();
        let csv = read_numeric_csv(&std::fs::read_to_string(&hp).unwrap()).unwrap();
        assert_eq!(csv.header, vec!["iter", "J", "grad_norm", "step", "wall_ms"]);
        assert_eq!(csv.rows[0][1], 1.5);

        let sp = dir.path().join("sweep.csv");
        write_sweep_csv(
            &sp,
            &[SweepRow {
                lambda: 4.0,
                final_j: 2.0,
                rel_l2_c: 0.03,
                iters: 17,
            }],
            &meta(),
        )
        .unwrap();
        let csv = read_numeric_csv(&std::fs::read_to_string(&sp).unwrap()).unwrap();
        assert_eq!(csv.rows[0][3], 17.0);
    }
}
