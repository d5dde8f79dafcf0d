//! Trace CSV: `# key=value` metadata lines, a header row, one row per
//! control tick. Floats are written in shortest round-trip form so a parsed
//! trace compares equal to the one emitted.

use std::io::{Read, Write};

use thiserror::Error;

use crate::sim::{ControllerKind, Energies, Port, Sample, Trace, TraceMeta, Work};

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("trace metadata: {0}")]
    Meta(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

const SCALARS: [&str; 6] = ["E_plant", "E_nominal", "E_spring", "W_h", "W_e", "W_ev"];

/// Column groups in order, with their widths.
fn groups(meta: &TraceMeta) -> [(&'static str, usize); 11] {
    let d = meta.dim;
    [
        ("t", 0),
        ("q", d),
        ("qdot", d),
        ("qn", d),
        ("qndot", d),
        ("tau_h", d),
        ("tau_a_raw", d),
        ("tau_a", d),
        ("tau_e", d),
        ("tau_f", meta.joint_dof),
        ("e_nr", d),
    ]
}

pub fn header(meta: &TraceMeta) -> Vec<String> {
    let mut cols = Vec::new();
    for (name, width) in groups(meta) {
        if width == 0 {
            cols.push(name.to_string());
        }
        for i in 0..width {
            cols.push(format!("{name}[{i}]"));
        }
    }
    cols.extend(SCALARS.iter().map(|s| s.to_string()));
    cols
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(";")
}

/// One sample's values in `header` order.
pub fn row(s: &Sample) -> Vec<f64> {
    let mut out = vec![s.t];
    for v in [&s.q, &s.qdot, &s.q_n, &s.qdot_n, &s.tau_h, &s.tau_a_raw, &s.tau_a, &s.tau_e, &s.tau_f, &s.e_nr] {
        out.extend_from_slice(v);
    }
    let (e, w) = (s.energy, s.work);
    out.extend([e.plant, e.nominal, e.spring, w.human, w.environment, w.events]);
    out
}

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<(), TraceCsvError> {
    let m = &trace.meta;
    writeln!(out, "# scenario={}", m.scenario.replace(['\n', '\r'], " "))?;
    writeln!(out, "# controller={}", m.controller.name())?;
    writeln!(out, "# port={}", if m.port == Port::Task { "task" } else { "joint" })?;
    writeln!(out, "# dim={}", m.dim)?;
    writeln!(out, "# joint_dof={}", m.joint_dof)?;
    writeln!(out, "# dt_control={}", fmt(m.dt_control))?;
    writeln!(out, "# k={}", list(&m.k))?;
    writeln!(out, "# kp={}", list(&m.kp))?;
    writeln!(out, "# nominal_damping={}", list(&m.nominal_damping))?;
    writeln!(out, "# eps={}", m.eps.map_or("none".to_string(), fmt))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(m))?;
    for s in &trace.samples {
        w.write_record(row(s).into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace CSV is UTF-8")
}

fn parse_list(s: &str) -> Result<Vec<f64>, TraceCsvError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|x| x.parse().map_err(|_| TraceCsvError::Meta(format!("bad number `{x}`")))).collect()
}

fn parse_meta(text: &str) -> Result<TraceMeta, TraceCsvError> {
    let mut kv = std::collections::HashMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some((k, v)) = line.trim_start_matches('#').trim_start().split_once('=') {
            kv.insert(k.trim().to_string(), v.to_string());
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| TraceCsvError::Meta(format!("missing `{k}`")));
    let num = |k: &str| -> Result<usize, TraceCsvError> {
        get(k)?.parse().map_err(|_| TraceCsvError::Meta(format!("bad `{k}`")))
    };
    let controller: ControllerKind = get("controller")?.parse().map_err(TraceCsvError::Meta)?;
    let port = match get("port")?.as_str() {
        "joint" => Port::Joint,
        "task" => Port::Task,
        other => return Err(TraceCsvError::Meta(format!("unknown port `{other}`"))),
    };
    let eps = match get("eps")?.as_str() {
        "none" => None,
        s => Some(s.parse().map_err(|_| TraceCsvError::Meta("bad `eps`".into()))?),
    };
    Ok(TraceMeta {
        scenario: get("scenario")?.clone(),
        controller,
        port,
        dim: num("dim")?,
        joint_dof: num("joint_dof")?,
        dt_control: get("dt_control")?.parse().map_err(|_| TraceCsvError::Meta("bad `dt_control`".into()))?,
        k: parse_list(get("k")?)?,
        kp: parse_list(get("kp")?)?,
        nominal_damping: parse_list(get("nominal_damping")?)?,
        eps,
    })
}

pub fn read_trace<R: Read>(mut input: R) -> Result<Trace, TraceCsvError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let meta = parse_meta(&text)?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let expected = header(&meta);
    let got: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(TraceCsvError::Meta(format!("header does not match metadata: expected {} columns", expected.len())));
    }
    let widths = groups(&meta);
    let mut samples = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| TraceCsvError::Row { row: row + 1, reason: e.to_string() })?;
        if vals.len() != expected.len() {
            return Err(TraceCsvError::Row { row: row + 1, reason: "wrong column count".into() });
        }
        let mut it = vals.into_iter();
        let t = it.next().expect("t column");
        let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
        let mut v: Vec<Vec<f64>> = widths[1..].iter().map(|&(_, w)| take(w)).collect();
        let sc = take(SCALARS.len());
        let mut next = || v.remove(0);
        samples.push(Sample {
            t,
            q: next(),
            qdot: next(),
            q_n: next(),
            qdot_n: next(),
            tau_h: next(),
            tau_a_raw: next(),
            tau_a: next(),
            tau_e: next(),
            tau_f: next(),
            e_nr: next(),
            energy: Energies { plant: sc[0], nominal: sc[1], spring: sc[2] },
            work: Work { human: sc[3], environment: sc[4], events: sc[5] },
        });
    }
    Ok(Trace { meta, samples })
}

pub fn trace_from_str(text: &str) -> Result<Trace, TraceCsvError> {
    read_trace(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(dim: usize, joint_dof: usize, eps: Option<f64>) -> TraceMeta {
        TraceMeta {
            scenario: "round trip".into(),
            controller: ControllerKind::PassiveTask,
            port: Port::Task,
            dim,
            joint_dof,
            dt_control: 0.002,
            k: vec![250.0; dim],
            kp: vec![20.0; dim],
            nominal_damping: vec![20.0; dim],
            eps,
        }
    }

    fn sample(dim: usize, joint_dof: usize, vals: &[f64]) -> Sample {
        let mut it = vals.iter().copied().cycle();
        let mut v = |n: usize| (0..n).map(|_| it.next().unwrap()).collect::<Vec<_>>();
        Sample {
            t: v(1)[0],
            q: v(dim),
            qdot: v(dim),
            q_n: v(dim),
            qdot_n: v(dim),
            tau_h: v(dim),
            tau_a_raw: v(dim),
            tau_a: v(dim),
            tau_e: v(dim),
            tau_f: v(joint_dof),
            e_nr: v(dim),
            energy: Energies { plant: v(1)[0], nominal: v(1)[0], spring: v(1)[0] },
            work: Work { human: v(1)[0], environment: v(1)[0], events: v(1)[0] },
        }
    }

    #[test]
    fn header_layout() {
        let h = header(&meta(1, 1, None));
        assert_eq!(h.first().unwrap(), "t");
        assert_eq!(h[1], "q[0]");
        assert_eq!(h.last().unwrap(), "W_ev");
        assert_eq!(h.len(), 1 + 10 + 6);
    }

    #[test]
    fn rejects_mismatched_header() {
        let t = Trace { meta: meta(2, 2, None), samples: vec![] };
        let text = trace_to_string(&t).replace("# dim=2", "# dim=1");
        assert!(trace_from_str(&text).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            dim in 1usize..3,
            eps in proptest::option::of(1e-4f64..1.0),
            vals in proptest::collection::vec(-1e6f64..1e6, 1..40),
            rows in 0usize..5,
        ) {
            let m = meta(dim, 2, eps);
            let samples = (0..rows).map(|r| {
                let mut shifted = vals.clone();
                shifted.rotate_left(r % vals.len());
                sample(dim, 2, &shifted)
            }).collect();
            let trace = Trace { meta: m, samples };
            prop_assert_eq!(trace_from_str(&trace_to_string(&trace)).unwrap(), trace);
        }
    }
}
