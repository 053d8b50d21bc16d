//! Dataset and result-table serialization.
//!
//! Datasets travel as comma-delimited text with a mandatory header
//! `y,d,z0,x1[,...][,y0,y1,u]`: the constant covariate is never written, the
//! three trailing columns appear only when latents were retained. Values are
//! printed with 16 fractional digits in scientific notation, which round-trips
//! every finite `f64` exactly. The first line is a provenance comment
//! (`# mte-welfare <version> config=<digest> seed=<seed>`) carrying the spec
//! digest and simulation seed and nothing nondeterministic, so identical
//! inputs always produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dgp::{Dataset, Latents, Observation, Provenance};
use crate::error::{Error, Result};
use crate::harness::RegretCurve;

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// The provenance comment placed at the top of every output file.
pub fn provenance_line(config_digest: &str, seed: u64) -> String {
    let digest = if config_digest.is_empty() {
        "none"
    } else {
        config_digest
    };
    format!("# mte-welfare {VERSION} config={digest} seed={seed}")
}

/// Render a dataset to delimited text.
pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    let dim_x = dataset
        .observations
        .first()
        .map(|o| o.x.len())
        .ok_or_else(|| Error::Data("refusing to write an empty dataset".into()))?;
    let mut out = String::new();
    out.push_str(&provenance_line(
        &dataset.provenance.spec_digest,
        dataset.provenance.seed,
    ));
    out.push('\n');
    out.push_str("y,d,z0");
    for j in 1..dim_x {
        write!(out, ",x{j}").expect("string write");
    }
    if dataset.latents_retained {
        out.push_str(",y0,y1,u");
    }
    out.push('\n');
    for (i, obs) in dataset.observations.iter().enumerate() {
        if obs.x.len() != dim_x {
            return Err(Error::Data(format!(
                "row {i} has {} covariates, expected {dim_x}",
                obs.x.len()
            )));
        }
        write!(
            out,
            "{},{},{}",
            fmt_value(obs.y),
            u8::from(obs.d),
            fmt_value(obs.z0)
        )
        .expect("string write");
        for v in &obs.x[1..] {
            write!(out, ",{}", fmt_value(*v)).expect("string write");
        }
        if dataset.latents_retained {
            let latents = obs.latents.as_ref().ok_or_else(|| {
                Error::Data(format!("row {i} is missing latents in a latent-retaining dataset"))
            })?;
            write!(
                out,
                ",{},{},{}",
                fmt_value(latents.y0),
                fmt_value(latents.y1),
                fmt_value(latents.u)
            )
            .expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let text = dataset_to_string(dataset)?;
    fs::write(path, text)
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

fn parse_provenance(line: &str) -> Provenance {
    let mut provenance = Provenance::default();
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some(digest) = token.strip_prefix("config=") {
            if digest != "none" {
                provenance.spec_digest = digest.to_string();
            }
        } else if let Some(seed) = token.strip_prefix("seed=") {
            provenance.seed = seed.parse().unwrap_or(0);
        }
    }
    provenance
}

fn parse_field(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        Error::Data(format!("row {row}, column {column}: unparseable value {raw:?}"))
    })
}

/// Parse a dataset from delimited text, validating the schema and the
/// structural constraints (`d ∈ {0,1}`, `u ∈ [0,1]`, and the observation
/// identity `y = d·y1 + (1−d)·y0` when latents are present).
pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().peekable();
    let provenance = if lines.peek().is_some_and(|l| l.starts_with('#')) {
        parse_provenance(lines.next().expect("peeked"))
    } else {
        Provenance::default()
    };
    let header = lines
        .next()
        .ok_or_else(|| Error::Data("dataset has no header line".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 4 || columns[0] != "y" || columns[1] != "d" || columns[2] != "z0" {
        return Err(Error::Data(format!(
            "header must start with y,d,z0 and at least one covariate column, got {header:?}"
        )));
    }
    let mut rest = &columns[3..];
    let latents_retained = rest.ends_with(&["y0", "y1", "u"]);
    if latents_retained {
        rest = &rest[..rest.len() - 3];
    }
    if rest.is_empty() {
        return Err(Error::Data("header has no covariate columns".into()));
    }
    for (j, name) in rest.iter().enumerate() {
        let expected = format!("x{}", j + 1);
        if *name != expected {
            return Err(Error::Data(format!(
                "unexpected column {name:?} where {expected:?} should be"
            )));
        }
    }
    let dim_x = rest.len() + 1;
    let width = columns.len();

    let mut observations = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Data(format!(
                "row {row} has {} fields, expected {width}",
                fields.len()
            )));
        }
        let y = parse_field(fields[0], row, "y")?;
        let d_raw = parse_field(fields[1], row, "d")?;
        let d = if d_raw == 0.0 {
            false
        } else if d_raw == 1.0 {
            true
        } else {
            return Err(Error::Data(format!(
                "row {row}: treatment indicator must be 0 or 1, got {d_raw}"
            )));
        };
        let z0 = parse_field(fields[2], row, "z0")?;
        let mut x = Vec::with_capacity(dim_x);
        x.push(1.0);
        for (j, raw) in fields[3..3 + dim_x - 1].iter().enumerate() {
            x.push(parse_field(raw, row, &format!("x{}", j + 1))?);
        }
        let latents = if latents_retained {
            let base = 3 + dim_x - 1;
            let y0 = parse_field(fields[base], row, "y0")?;
            let y1 = parse_field(fields[base + 1], row, "y1")?;
            let u = parse_field(fields[base + 2], row, "u")?;
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Data(format!(
                    "row {row}: selection latent u={u} outside [0, 1]"
                )));
            }
            let implied = if d { y1 } else { y0 };
            if (y - implied).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "row {row}: y={y} does not match the latent identity value {implied}"
                )));
            }
            Some(Latents { y0, y1, u })
        } else {
            None
        };
        observations.push(Observation { y, d, z0, x, latents });
    }
    if observations.is_empty() {
        return Err(Error::Data("dataset has a header but no rows".into()));
    }
    Ok(Dataset {
        observations,
        latents_retained,
        provenance,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))?;
    dataset_from_str(&text)
}

/// Render a regret curve as a delimited table: one row per `(spec, n)` with
/// the family worst case and its √n scaling repeated per n, then a summary
/// footer with the fitted rate (`slope=NA` when unfittable).
pub fn regret_curve_to_string(
    curve: &RegretCurve,
    config_digest: &str,
    seed: u64,
) -> String {
    let mut out = String::new();
    out.push_str(&provenance_line(config_digest, seed));
    out.push('\n');
    out.push_str("spec_id,n,mean_regret,std_error,failures,worst_case,scaled_regret\n");
    for sc in &curve.specs {
        for (ni, p) in sc.points.iter().enumerate() {
            let wc = &curve.worst_case[ni];
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                sc.spec_id,
                p.n,
                fmt_value(p.mean_regret),
                fmt_value(p.std_error),
                p.failures,
                fmt_value(wc.regret),
                fmt_value(wc.scaled)
            )
            .expect("string write");
        }
    }
    match &curve.rate {
        Some(rate) => writeln!(
            out,
            "# slope={} stderr={} points_used={} excluded_zero={}",
            fmt_value(rate.slope),
            fmt_value(rate.std_error),
            rate.points_used,
            rate.excluded_zero
        )
        .expect("string write"),
        None => out.push_str("# slope=NA stderr=NA\n"),
    }
    out
}

pub fn write_regret_curve(
    curve: &RegretCurve,
    config_digest: &str,
    seed: u64,
    path: &Path,
) -> Result<()> {
    fs::write(path, regret_curve_to_string(curve, config_digest, seed))
        .map_err(|e| Error::Data(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{simulate, DgpSpec};
    use crate::harness::{RateFit, RegretPoint, SpecCurve, WorstCasePoint};

    #[test]
    fn dataset_round_trips_exactly() {
        let spec = DgpSpec::reference();
        for retain in [false, true] {
            let data = simulate(&spec, 400, 51, retain);
            let text = dataset_to_string(&data).unwrap();
            let back = dataset_from_str(&text).unwrap();
            assert_eq!(back.observations, data.observations);
            assert_eq!(back.latents_retained, retain);
            assert_eq!(back.provenance, data.provenance);
            // Same input, same bytes.
            assert_eq!(dataset_to_string(&back).unwrap(), text);
        }
    }

    #[test]
    fn provenance_line_carries_version_digest_and_seed() {
        let spec = DgpSpec::reference();
        let data = simulate(&spec, 10, 52, false);
        let text = dataset_to_string(&data).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            format!("# mte-welfare {VERSION} config={} seed=52", spec.digest())
        );
    }

    #[test]
    fn foreign_dataset_without_provenance_reads_with_defaults() {
        let text = "y,d,z0,x1\n1.5,1,0,0.25\n-0.5,0,1,-0.25\n";
        let data = dataset_from_str(text).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.provenance, Provenance::default());
        assert_eq!(data.observations[0].x, vec![1.0, 0.25]);
        assert!(data.observations[0].d);
        assert!(!data.latents_retained);
    }

    #[test]
    fn header_schema_is_enforced() {
        for (text, needle) in [
            ("y,d,z1,x1\n1,0,0,0\n", "y,d,z0"),
            ("y,d,z0\n1,0,0\n", "y,d,z0"),
            ("y,d,z0,x2\n1,0,0,0\n", "\"x1\""),
            ("y,d,z0,x1,x3\n1,0,0,0,0\n", "\"x2\""),
        ] {
            let err = dataset_from_str(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn row_validation_catches_structural_violations() {
        let bad_d = "y,d,z0,x1\n1.0,2,0,0\n";
        assert!(dataset_from_str(bad_d)
            .unwrap_err()
            .to_string()
            .contains("treatment indicator"));

        let bad_u = "y,d,z0,x1,y0,y1,u\n1.0,1,0,0,0.0,1.0,1.5\n";
        assert!(dataset_from_str(bad_u).unwrap_err().to_string().contains("outside [0, 1]"));

        let bad_identity = "y,d,z0,x1,y0,y1,u\n0.0,1,0,0,0.0,1.0,0.5\n";
        assert!(dataset_from_str(bad_identity)
            .unwrap_err()
            .to_string()
            .contains("latent identity"));

        let unparseable = "y,d,z0,x1\noops,0,0,0\n";
        let err = dataset_from_str(unparseable).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        assert!(err.to_string().contains("column y"), "{err}");

        let ragged = "y,d,z0,x1\n1.0,0,0\n";
        assert!(dataset_from_str(ragged).unwrap_err().to_string().contains("fields"));
    }

    #[test]
    fn regret_curve_table_is_deterministic_and_complete() {
        let curve = RegretCurve {
            specs: vec![SpecCurve {
                spec_id: "abcd".into(),
                points: vec![
                    RegretPoint { n: 250, mean_regret: 0.04, std_error: 0.002, failures: 0 },
                    RegretPoint { n: 1000, mean_regret: 0.02, std_error: 0.001, failures: 1 },
                    RegretPoint { n: 4000, mean_regret: 0.01, std_error: 0.0005, failures: 0 },
                ],
            }],
            worst_case: vec![
                WorstCasePoint { n: 250, regret: 0.04, scaled: 0.6324555320336759 },
                WorstCasePoint { n: 1000, regret: 0.02, scaled: 0.6324555320336759 },
                WorstCasePoint { n: 4000, regret: 0.01, scaled: 0.6324555320336759 },
            ],
            rate: Some(RateFit {
                slope: -0.5,
                std_error: 0.01,
                points_used: 3,
                excluded_zero: 0,
            }),
        };
        let text = regret_curve_to_string(&curve, "deadbeef", 7);
        assert_eq!(text, regret_curve_to_string(&curve, "deadbeef", 7));
        assert!(text.starts_with(&format!("# mte-welfare {VERSION} config=deadbeef seed=7\n")));
        assert!(text.contains("spec_id,n,mean_regret,std_error,failures,worst_case,scaled_regret"));
        assert_eq!(text.lines().filter(|l| l.starts_with("abcd,")).count(), 3);
        let footer = text.lines().last().unwrap();
        assert!(footer.starts_with("# slope=-5.0000000000000000e-1"), "{footer}");

        let unfit = RegretCurve { rate: None, ..curve };
        assert!(regret_curve_to_string(&unfit, "deadbeef", 7).ends_with("# slope=NA stderr=NA\n"));
    }
}
