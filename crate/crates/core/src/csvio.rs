//! CSV artifacts. Every float is written with 17 significant digits
//! (`{:.16e}`) so that reruns diff byte-for-byte; absent values are empty
//! fields.

use std::io::{Read, Write};

use crate::analysis::{AngleStats, SweepRow};
use crate::batch::{CenterMatrix, EmbeddingBatch, LossGradReport, Matrix};
use crate::error::{Error, Result};
use crate::margin::EquivalenceRecord;
use crate::rescale::CurvePoint;
use crate::synthetic::NoisyDataset;
use crate::trainer::TrainTrace;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{s}` is not a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: `{s}` is not a non-negative integer")))
}

pub fn write_curves<W: Write>(w: W, points: &[CurvePoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["theta", "v_intra", "v_inter"])?;
    for p in points {
        out.write_record([fmt_f64(p.theta), fmt_f64(p.v_intra), fmt_f64(p.v_inter)])?;
    }
    out.flush()?;
    Ok(())
}

/// Rows as `index,true_label,given_label,is_noise,f0,...,f{d-1}`.
pub fn write_samples<W: Write>(
    w: W,
    features: &EmbeddingBatch,
    true_labels: &[usize],
    noise_mask: &[bool],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let d = features.dim();
    let mut header = vec![
        "index".to_string(),
        "true_label".into(),
        "given_label".into(),
        "is_noise".into(),
    ];
    header.extend((0..d).map(|k| format!("f{k}")));
    out.write_record(&header)?;
    for i in 0..features.len() {
        let mut rec = vec![
            i.to_string(),
            true_labels[i].to_string(),
            features.label(i).to_string(),
            u8::from(noise_mask[i]).to_string(),
        ];
        rec.extend(features.row(i).iter().map(|&v| fmt_f64(v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(w: W, data: &NoisyDataset) -> Result<()> {
    write_samples(w, &data.inputs, &data.true_labels, &data.noise_mask)
}

/// Inverse of [`write_samples`]. The class count is taken as one more than
/// the largest label seen.
pub fn read_dataset<R: Read>(r: R) -> Result<NoisyDataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 5 || &headers[0] != "index" || &headers[3] != "is_noise" {
        return Err(Error::Parse(
            "dataset header must be index,true_label,given_label,is_noise,f0,...".into(),
        ));
    }
    let d = headers.len() - 4;
    let (mut rows, mut true_labels, mut given, mut mask) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        true_labels.push(parse_usize(&rec[1], "true_label")?);
        given.push(parse_usize(&rec[2], "given_label")?);
        mask.push(match rec[3].trim() {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("is_noise must be 0 or 1, got `{other}`"))),
        });
        let row = (0..d)
            .map(|k| parse_f64(&rec[4 + k], "feature"))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let num_classes = true_labels.iter().chain(&given).copied().max().map_or(0, |m| m + 1);
    let features = if rows.is_empty() {
        Matrix::zeros(0, d)
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok(NoisyDataset {
        inputs: EmbeddingBatch::new(features, given)?,
        true_labels,
        noise_mask: mask,
        num_classes,
    })
}

/// One row per center: `class,w0,...,w{d-1}`.
pub fn write_centers<W: Write>(w: W, centers: &CenterMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["class".to_string()];
    header.extend((0..centers.dim()).map(|k| format!("w{k}")));
    out.write_record(&header)?;
    for j in 0..centers.num_classes() {
        let mut rec = vec![j.to_string()];
        rec.extend(centers.column(j).iter().map(|&v| fmt_f64(v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_centers<R: Read>(r: R) -> Result<CenterMatrix> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "class" {
        return Err(Error::Parse("centers header must be class,w0,...".into()));
    }
    let mut rows = Vec::new();
    for (j, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if parse_usize(&rec[0], "class")? != j {
            return Err(Error::Parse("center rows must be in class order".into()));
        }
        rows.push(
            (1..rec.len())
                .map(|k| parse_f64(&rec[k], "center"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    CenterMatrix::from_vecs(&rows)
}

/// Angles in degrees.
pub fn write_trace<W: Write>(w: W, trace: &TrainTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "step",
        "loss",
        "clean_intra_deg",
        "noisy_intra_deg",
        "inter_deg",
        "max_norm_drift",
    ])?;
    for s in &trace.snapshots {
        out.write_record([
            s.step.to_string(),
            fmt_f64(s.loss),
            fmt_f64(s.clean_intra_deg),
            fmt_opt(s.noisy_intra_deg),
            fmt_f64(s.inter_deg),
            fmt_f64(s.max_norm_drift),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "noise_rate",
        "loss",
        "a",
        "b",
        "clean_intra",
        "noisy_intra",
        "delta_intra",
        "inter_mean",
        "inter_std",
        "final_loss",
    ])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.noise_rate),
            r.loss.clone(),
            fmt_opt(r.a),
            fmt_opt(r.b),
            fmt_f64(r.stats.clean_intra_mean),
            fmt_opt(r.stats.noise_intra_mean),
            fmt_opt(r.stats.delta_intra),
            fmt_f64(r.stats.inter_mean),
            fmt_f64(r.stats.inter_std),
            fmt_f64(r.final_loss),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stats<W: Write>(w: W, s: &AngleStats) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["clean_intra", "noisy_intra", "delta_intra", "inter_mean", "inter_std"])?;
    out.write_record([
        fmt_f64(s.clean_intra_mean),
        fmt_opt(s.noise_intra_mean),
        fmt_opt(s.delta_intra),
        fmt_f64(s.inter_mean),
        fmt_f64(s.inter_std),
    ])?;
    out.flush()?;
    Ok(())
}

/// Per-sample gradient diagnostics; angles in radians.
pub fn write_diagnostics<W: Write>(w: W, batch: &EmbeddingBatch, report: &LossGradReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["index", "label", "intra_angle", "intra_grad_norm", "inter_grad_norm"])?;
    for i in 0..batch.len() {
        out.write_record([
            i.to_string(),
            batch.label(i).to_string(),
            fmt_f64(report.intra_angles[i]),
            fmt_f64(report.intra_grad_norms[i]),
            fmt_f64(report.inter_grad_norms[i]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Single record `variant,N,C,d,seed,max_relative_deviation`, no header.
pub fn write_equivalence<W: Write>(w: W, rec: &EquivalenceRecord) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        rec.variant.name().to_string(),
        rec.n.to_string(),
        rec.c.to_string(),
        rec.d.to_string(),
        rec.seed.to_string(),
        fmt_f64(rec.max_relative_deviation),
    ])?;
    out.flush()?;
    Ok(())
}
