//! Feature CSV: `domain,label,f0,...,f{d-1}`, one row per sample.

use std::path::Path;

use super::{Domain, Environment, Sample};
use crate::error::{Error, Result};
use crate::fmt::g17;

/// Reads comma-separated text into its header and `(line, record)` pairs.
/// Blank lines are skipped; records may differ in length from the header.
pub(crate) fn read_table(text: &str) -> Result<(Vec<String>, Vec<(usize, csv::StringRecord)>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_err)?.iter().map(str::to_string).collect(),
        None => return Err(parse_err(1, "empty file")),
    };
    let rows = records
        .map(|r| {
            let r = r.map_err(csv_err)?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            Ok((line, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<Environment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_feature_csv(&text).map_err(|e| e.context(format!("reading {}", path.display())))
}

/// Parses feature CSV text. Domains appear in order of first occurrence and
/// keep their rows in file order. `K` is inferred as the largest label + 1.
pub fn parse_feature_csv(text: &str) -> Result<Environment> {
    let (cols, records) = read_table(text)?;
    if cols.len() < 3 || cols[0] != "domain" || cols[1] != "label" {
        return Err(parse_err(1, format!("unknown header {:?}; expected domain,label,f0,...", cols.join(","))));
    }
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("header column {} is {c:?}, expected \"f{j}\"", j + 3)));
        }
    }
    let d = cols.len() - 2;

    let mut order: Vec<String> = Vec::new();
    let mut by_domain: std::collections::HashMap<String, Vec<Sample>> = Default::default();
    for (lineno, fields) in &records {
        let lineno = *lineno;
        if fields.len() != d + 2 {
            return Err(parse_err(lineno, format!("expected {} fields, found {}", d + 2, fields.len())));
        }
        let id = &fields[0];
        if id.is_empty() {
            return Err(parse_err(lineno, "empty domain id"));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(lineno, format!("label {:?} is not a nonnegative integer", &fields[1])))?;
        let features = fields
            .iter()
            .skip(2)
            .enumerate()
            .map(|(j, f)| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(lineno, format!("feature f{j} value {f:?} is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if !by_domain.contains_key(id) {
            order.push(id.to_string());
        }
        by_domain.entry(id.to_string()).or_default().push(Sample::new(features, label));
    }
    if order.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    let domains = order
        .into_iter()
        .map(|id| {
            let samples = by_domain.remove(&id).unwrap_or_default();
            Domain::new(id, samples)
        })
        .collect::<Result<Vec<_>>>()?;
    Environment::from_domains(domains)
}

/// Canonical text form: domains in order, reals with 17 significant digits,
/// LF line endings.
fn quote_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn feature_csv_string(env: &Environment) -> String {
    let mut out = String::from("domain,label");
    for j in 0..env.feature_dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for dom in env.domains() {
        let id = quote_field(&dom.id);
        for s in &dom.samples {
            out.push_str(&id);
            out.push(',');
            out.push_str(&s.label.to_string());
            for v in &s.features {
                out.push(',');
                out.push_str(&g17(*v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn emit_feature_csv(env: &Environment, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, feature_csv_string(env))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_domain_two_rows() {
        let env = parse_feature_csv("domain,label,f0,f1\na,0,1.5,2\na,1,0,-3\n").unwrap();
        assert_eq!(env.n_domains(), 1);
        assert_eq!(env.domains()[0].len(), 2);
        assert_eq!(env.num_classes(), 2);
        assert_eq!(env.domains()[0].samples[1].features, vec![0.0, -3.0]);
    }

    #[test]
    fn domains_in_first_appearance_order() {
        let text = "domain,label,f0\nz,0,1\na,1,2\nz,1,3\nm,0,4\na,0,5\na,1,6\n";
        let env = parse_feature_csv(text).unwrap();
        let ids: Vec<&str> = env.domains().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "m"]);
        let counts: Vec<usize> = env.domains().iter().map(|d| d.len()).collect();
        assert_eq!(counts, [2, 3, 1]);
        assert_eq!(env.domains()[1].samples[2].features, vec![6.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("domain,label,x0\na,0,1\n", 1),
            ("domain,label,f0,f1\na,0,1,2\na,0,1\n", 3),
            ("domain,label,f0\na,0,1\nb,0,abc\n", 3),
            ("domain,label,f0\na,-1,1\n", 2),
            ("domain,label,f0\na,0,inf\n", 2),
        ];
        for (text, want) in cases {
            match parse_feature_csv(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn awkward_domain_ids_round_trip() {
        let text = "domain,label,f0\n\"rot,15\",0,1\n\"say \"\"hi\"\"\",1,2\n";
        let env = parse_feature_csv(text).unwrap();
        let ids: Vec<&str> = env.domains().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["rot,15", "say \"hi\""]);
        assert_eq!(feature_csv_string(&env), text);
    }

    #[test]
    fn canonical_text_round_trips_byte_identically() {
        let text = "domain,label,f0,f1\nb,2,0.10000000000000001,-3\nb,0,1e-05,7\nc,1,256,0\n";
        let canonical = "domain,label,f0,f1\nb,2,0.10000000000000001,-3\nb,0,1.0000000000000001e-05,7\nc,1,256,0\n";
        let env = parse_feature_csv(text).unwrap();
        assert_eq!(feature_csv_string(&env), canonical);
        assert_eq!(feature_csv_string(&parse_feature_csv(canonical).unwrap()), canonical);
    }
}
