//! Plain-text artifacts: CSV for numeric series, TOML for configuration and metadata.
//! Floats are written in shortest round-trip form, so reading back is exact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::diagnostics::{PosteriorSummary, TracePoint};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, LatentState};
use crate::samplers::{ChainStore, MoveCounters, SamplerKind, Tally};

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(path, format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn num<T: std::str::FromStr>(path: &Path, field: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| parse_err(path, format!("bad number '{field}': {e}")))
}

fn put(w: &mut csv::Writer<fs::File>, path: &Path, rec: &[String]) -> Result<()> {
    w.write_record(rec).map_err(|e| csv_err(path, e))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

const COUNTER_COLUMNS: [&str; 11] = [
    "birth_proposed",
    "birth_accepted",
    "death_proposed",
    "death_accepted",
    "update_proposed",
    "update_accepted",
    "amp_var_proposed",
    "amp_var_accepted",
    "ir_scale_proposed",
    "ir_scale_accepted",
    "guarded",
];
const LEAD: usize = 6 + COUNTER_COLUMNS.len();

fn counter_fields(c: &MoveCounters) -> [u64; 11] {
    let t = [c.birth, c.death, c.update, c.amp_var, c.ir_scale];
    let mut out = [0; 11];
    for (i, t) in t.iter().enumerate() {
        out[2 * i] = t.proposed;
        out[2 * i + 1] = t.accepted;
    }
    out[10] = c.guarded;
    out
}

fn counters_from(f: [u64; 11]) -> MoveCounters {
    let t = |i: usize| Tally {
        proposed: f[2 * i],
        accepted: f[2 * i + 1],
    };
    MoveCounters {
        birth: t(0),
        death: t(1),
        update: t(2),
        amp_var: t(3),
        ir_scale: t(4),
        guarded: f[10],
    }
}

/// Columns `iteration, bern_prob, noise_var, amp_var, ir_scale, support`, the
/// cumulative move counters, then `x_0 … x_{M−1}`. `support` is the `0`/`1` string of `q`.
pub fn write_chain_csv(path: &Path, chain: &ChainStore) -> Result<()> {
    let mut w = writer(path)?;
    let mut head: Vec<String> = ["iteration", "bern_prob", "noise_var", "amp_var", "ir_scale", "support"]
        .map(String::from)
        .to_vec();
    head.extend(COUNTER_COLUMNS.map(String::from));
    head.extend((0..chain.m()).map(|k| format!("x_{k}")));
    put(&mut w, path, &head)?;
    for i in 0..chain.len() {
        let hp = chain.hyper(i);
        let mut rec = vec![
            chain.iteration(i).to_string(),
            hp.bern_prob.to_string(),
            hp.noise_var.to_string(),
            hp.amp_var.to_string(),
            hp.ir_scale.to_string(),
            chain.q_bits(i),
        ];
        rec.extend(counter_fields(chain.counters(i)).iter().map(u64::to_string));
        rec.extend(chain.x(i).iter().map(f64::to_string));
        put(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// Inverse of [`write_chain_csv`].
pub fn read_chain_csv(path: &Path, kind: SamplerKind, seed: u64) -> Result<ChainStore> {
    let mut r = reader(path, true)?;
    let m = r.headers().map_err(|e| csv_err(path, e))?.len().saturating_sub(LEAD);
    let mut store = ChainStore::new(kind, seed, m);
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != LEAD + m {
            return Err(parse_err(
                path,
                format!("expected {} columns, got {}", LEAD + m, rec.len()),
            ));
        }
        let bits = &rec[5];
        if bits.len() != m || !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(parse_err(path, format!("support '{bits}' is not a {m}-bit string")));
        }
        let mut s = LatentState::empty(m);
        for (k, b) in bits.bytes().enumerate() {
            s.q[k] = b == b'1';
        }
        let mut f = [0u64; 11];
        for (i, v) in f.iter_mut().enumerate() {
            *v = num(path, &rec[6 + i])?;
        }
        for k in 0..m {
            s.x[k] = num(path, &rec[LEAD + k])?;
        }
        let hp = Hyperparams {
            bern_prob: num(path, &rec[1])?,
            noise_var: num(path, &rec[2])?,
            amp_var: num(path, &rec[3])?,
            ir_scale: num(path, &rec[4])?,
        };
        store.push(num(path, &rec[0])?, &s, &hp, &counters_from(f));
    }
    Ok(store)
}

/// Columns `samples_used, R, log10_R`.
pub fn write_trace_csv(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, &["samples_used", "R", "log10_R"].map(String::from))?;
    for p in trace {
        put(
            &mut w,
            path,
            &[p.samples_used.to_string(), p.r.to_string(), p.r.log10().to_string()],
        )?;
    }
    finish(w, path)
}

/// Columns `site, pm_x, inclusion_freq` and `true_x` when the truth is known.
pub fn write_pm_csv(path: &Path, pm: &PosteriorSummary, truth: Option<&[f64]>) -> Result<()> {
    let mut w = writer(path)?;
    let mut head = vec!["site", "pm_x", "inclusion_freq"];
    if truth.is_some() {
        head.push("true_x");
    }
    put(&mut w, path, &head.into_iter().map(String::from).collect::<Vec<_>>())?;
    for k in 0..pm.pm_x.len() {
        let mut rec = vec![k.to_string(), pm.pm_x[k].to_string(), pm.inclusion[k].to_string()];
        if let Some(t) = truth {
            rec.push(t[k].to_string());
        }
        put(&mut w, path, &rec)?;
    }
    finish(w, path)
}

/// One value per line, no header.
pub fn write_vector_csv(path: &Path, v: &[f64]) -> Result<()> {
    let body: String = v.iter().map(|x| format!("{x}\n")).collect();
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| num(path, l))
        .collect()
}

/// Columns `site, amplitude` for the active sites only.
pub fn write_truth_csv(path: &Path, truth: &LatentState) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, &["site", "amplitude"].map(String::from))?;
    for k in truth.active_sites() {
        put(&mut w, path, &[k.to_string(), truth.x[k].to_string()])?;
    }
    finish(w, path)
}

pub fn read_truth_csv(path: &Path, m: usize) -> Result<LatentState> {
    let mut s = LatentState::empty(m);
    for rec in reader(path, true)?.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 2 {
            return Err(parse_err(path, "expected two columns: site, amplitude"));
        }
        let k: usize = num(path, &rec[0])?;
        if k >= m {
            return Err(parse_err(path, format!("site {k} outside 0..{m}")));
        }
        s.q[k] = true;
        s.x[k] = num(path, &rec[1])?;
    }
    Ok(s)
}

/// Dense matrix, one comma-separated row per line, no header.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader(path, false)?.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(rec.iter().map(|f| num(path, f)).collect::<Result<_>>()?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(path, "matrix rows must be non-empty and of equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| parse_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::SamplerConfig;

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut store = ChainStore::new(SamplerKind::Bgh, 3, 70);
        let mut hp = SamplerConfig::default().init;
        for it in 1..=3 {
            let mut s = LatentState::empty(70);
            s.q[it * 20] = true;
            s.x[it * 20] = 0.1 * it as f64 + 1e-17;
            hp.amp_var = 1.0 / 3.0 * it as f64;
            let mut c = MoveCounters::default();
            c.birth.record(true);
            c.update.record(false);
            c.guarded = it as u64;
            store.push(it * 2, &s, &hp, &c);
        }
        write_chain_csv(&path, &store).unwrap();
        assert_eq!(read_chain_csv(&path, SamplerKind::Bgh, 3).unwrap(), store);
    }

    #[test]
    fn vectors_truth_and_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let v = vec![1.0 / 3.0, -2.5e-300, 0.0];
        let p = dir.path().join("y.csv");
        write_vector_csv(&p, &v).unwrap();
        assert_eq!(read_vector_csv(&p).unwrap(), v);

        let mut truth = LatentState::empty(5);
        truth.q[1] = true;
        truth.x[1] = 0.7;
        let p = dir.path().join("t.csv");
        write_truth_csv(&p, &truth).unwrap();
        assert_eq!(read_truth_csv(&p, 5).unwrap(), truth);
        assert!(read_truth_csv(&p, 1).is_err());

        let p = dir.path().join("h.csv");
        fs::write(&p, "1, 2\n3, 4.5\n").unwrap();
        assert_eq!(
            read_matrix_csv(&p).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5])
        );
        fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
        assert!(matches!(
            read_vector_csv(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn trace_and_pm_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        write_trace_csv(
            &p,
            &[TracePoint {
                samples_used: 10,
                r: 100.0,
            }],
        )
        .unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "samples_used,R,log10_R\n10,100,2\n");
        let pm = PosteriorSummary {
            pm_x: vec![0.5, 0.0],
            inclusion: vec![1.0, 0.0],
            samples: 2,
        };
        let p = dir.path().join("pm.csv");
        write_pm_csv(&p, &pm, Some(&[0.4, 0.0])).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "site,pm_x,inclusion_freq,true_x\n0,0.5,1,0.4\n1,0,0,0\n"
        );
    }
}
