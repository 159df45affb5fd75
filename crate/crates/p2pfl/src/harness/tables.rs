//! Metrics tables: the per-client CSV, the per-round aggregator CSV, their
//! strict parsers, and the accuracy comparison between two runs.
//!
//! Output is UTF-8 with LF line endings and a mandatory header; floats are
//! printed with six significant digits, so identical runs produce
//! byte-identical files. Non-participant rows leave loss, accuracy, and
//! epsilon empty. An unbounded epsilon prints as `inf`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::federation::{Role, RoundRecord};
use crate::graph::NodeId;

pub const CLIENT_HEADER: &str = "round,node_id,role,loss,accuracy,epsilon";
pub const SERVER_HEADER: &str = "round,aggregator_id,accuracy,loss";
pub const COMPARE_HEADER: &str = "round,accuracy_a,accuracy_b,delta";

/// Six significant digits in plain decimal notation.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.000000".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (5 - exponent).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

fn sorted_records(records: &[RoundRecord]) -> Vec<&RoundRecord> {
    let mut rows: Vec<&RoundRecord> = records.iter().collect();
    rows.sort_by_key(|r| (r.round, r.node));
    rows
}

/// One row per (round, node): `round,node_id,role,loss,accuracy,epsilon`.
pub fn emit_client_table<W: Write>(records: &[RoundRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CLIENT_HEADER}")?;
    for r in sorted_records(records) {
        match r.role {
            Role::Dnp => writeln!(w, "{},{},dnp,,,", r.round, r.node)?,
            role => writeln!(
                w,
                "{},{},{},{},{},{}",
                r.round,
                r.node,
                role,
                format_sig6(r.loss.unwrap_or(f64::NAN)),
                format_sig6(r.accuracy.unwrap_or(f64::NAN)),
                format_sig6(r.epsilon),
            )?,
        }
    }
    Ok(())
}

/// One row per round with the aggregator's view of the global model:
/// `round,aggregator_id,accuracy,loss`.
pub fn emit_server_table<W: Write>(records: &[RoundRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{SERVER_HEADER}")?;
    for r in sorted_records(records) {
        if r.role == Role::Aggregator {
            writeln!(
                w,
                "{},{},{},{}",
                r.round,
                r.node,
                format_sig6(r.accuracy.unwrap_or(f64::NAN)),
                format_sig6(r.loss.unwrap_or(f64::NAN)),
            )?;
        }
    }
    Ok(())
}

/// Wide pivot for visual comparison with the published table shape: one
/// row per round, `role/loss/accuracy` column triple per node. DNP cells
/// are the literal `DNP` with empty metrics.
pub fn emit_client_table_wide<W: Write>(records: &[RoundRecord], w: &mut W) -> std::io::Result<()> {
    let nodes = records.iter().map(|r| r.node + 1).max().unwrap_or(0);
    let rounds: Vec<usize> = {
        let mut r: Vec<usize> = records.iter().map(|r| r.round).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    write!(w, "round")?;
    for n in 0..nodes {
        write!(w, ",node{n}_role,node{n}_loss,node{n}_accuracy")?;
    }
    writeln!(w)?;
    let rows = sorted_records(records);
    for round in rounds {
        write!(w, "{round}")?;
        for n in 0..nodes {
            match rows.iter().find(|r| r.round == round && r.node == n) {
                Some(r) if r.role != Role::Dnp => write!(
                    w,
                    ",{},{},{}",
                    r.role,
                    format_sig6(r.loss.unwrap_or(f64::NAN)),
                    format_sig6(r.accuracy.unwrap_or(f64::NAN)),
                )?,
                _ => write!(w, ",DNP,,")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parsed row of a client table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRow {
    pub round: usize,
    pub node: NodeId,
    pub role: Role,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Parsed row of a server table.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerRow {
    pub round: usize,
    pub aggregator: NodeId,
    pub accuracy: f64,
    pub loss: f64,
}

fn table_err(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Table {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_float(field: &str, what: &str, source: &str, line: usize) -> Result<f64> {
    match field {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse::<f64>()
            .map_err(|_| table_err(source, line, format!("bad {what} '{field}'"))),
    }
}

/// Strict parser for [`emit_client_table`] output.
pub fn parse_client_table(text: &str, source: &str) -> Result<Vec<ClientRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CLIENT_HEADER => {}
        Some((_, header)) => {
            return Err(table_err(source, 1, format!("unexpected header '{header}'")))
        }
        None => return Err(table_err(source, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(table_err(
                source,
                lineno,
                format!("{} fields, expected 6", fields.len()),
            ));
        }
        let round: usize = fields[0]
            .parse()
            .map_err(|_| table_err(source, lineno, format!("bad round '{}'", fields[0])))?;
        let node: usize = fields[1]
            .parse()
            .map_err(|_| table_err(source, lineno, format!("bad node id '{}'", fields[1])))?;
        let role: Role = fields[2]
            .parse()
            .map_err(|_| table_err(source, lineno, format!("bad role '{}'", fields[2])))?;
        let row = match role {
            Role::Dnp => {
                if fields[3..].iter().any(|f| !f.is_empty()) {
                    return Err(table_err(source, lineno, "dnp rows must have empty metrics"));
                }
                ClientRow {
                    round,
                    node,
                    role,
                    loss: None,
                    accuracy: None,
                    epsilon: None,
                }
            }
            _ => ClientRow {
                round,
                node,
                role,
                loss: Some(parse_float(fields[3], "loss", source, lineno)?),
                accuracy: Some(parse_float(fields[4], "accuracy", source, lineno)?),
                epsilon: Some(parse_float(fields[5], "epsilon", source, lineno)?),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Strict parser for [`emit_server_table`] output.
pub fn parse_server_table(text: &str, source: &str) -> Result<Vec<ServerRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SERVER_HEADER => {}
        Some((_, header)) => {
            return Err(table_err(source, 1, format!("unexpected header '{header}'")))
        }
        None => return Err(table_err(source, 1, "empty file")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(table_err(
                source,
                lineno,
                format!("{} fields, expected 4", fields.len()),
            ));
        }
        rows.push(ServerRow {
            round: fields[0]
                .parse()
                .map_err(|_| table_err(source, lineno, format!("bad round '{}'", fields[0])))?,
            aggregator: fields[1]
                .parse()
                .map_err(|_| table_err(source, lineno, format!("bad node id '{}'", fields[1])))?,
            accuracy: parse_float(fields[2], "accuracy", source, lineno)?,
            loss: parse_float(fields[3], "loss", source, lineno)?,
        });
    }
    Ok(rows)
}

/// Per-round accuracy deltas between two server tables (B minus A).
/// The runs must cover the same round sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub round: usize,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub delta: f64,
}

pub fn compare_server_tables(a: &[ServerRow], b: &[ServerRow]) -> Result<Vec<CompareRow>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "runs cover {} vs {} rounds",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .map(|(ra, rb)| {
            if ra.round != rb.round {
                return Err(Error::InvalidArgument(format!(
                    "round mismatch: {} vs {}",
                    ra.round, rb.round
                )));
            }
            Ok(CompareRow {
                round: ra.round,
                accuracy_a: ra.accuracy,
                accuracy_b: rb.accuracy,
                delta: rb.accuracy - ra.accuracy,
            })
        })
        .collect()
}

pub fn emit_compare_table<W: Write>(rows: &[CompareRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{COMPARE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.round,
            format_sig6(r.accuracy_a),
            format_sig6(r.accuracy_b),
            format_sig6(r.delta),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: usize, node: usize, role: Role) -> RoundRecord {
        let (loss, accuracy) = match role {
            Role::Dnp => (None, None),
            _ => (Some(0.54321 + round as f64), Some(0.875)),
        };
        RoundRecord {
            round,
            node,
            role,
            loss,
            accuracy,
            epsilon: f64::INFINITY,
        }
    }

    fn small_run() -> Vec<RoundRecord> {
        let mut records = Vec::new();
        for round in 0..2 {
            records.push(record(round, 0, Role::Aggregator));
            records.push(record(round, 1, Role::Provider));
            records.push(record(round, 2, Role::Dnp));
        }
        records
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.906), "0.906000");
        assert_eq!(format_sig6(2.302585092994046), "2.30259");
        assert_eq!(format_sig6(484.5), "484.500");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
        assert_eq!(format_sig6(0.0), "0.000000");
        assert_eq!(format_sig6(-0.25), "-0.250000");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn client_table_shape() {
        let mut buf = Vec::new();
        emit_client_table(&small_run(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CLIENT_HEADER);
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[3], "0,2,dnp,,,");
        assert!(lines[1].starts_with("0,0,aggregator,0.543210,0.875000,inf"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn server_table_shape() {
        let mut buf = Vec::new();
        emit_server_table(&small_run(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], SERVER_HEADER);
        assert_eq!(lines[1], "0,0,0.875000,0.543210");
        assert_eq!(lines[2], "1,0,0.875000,1.54321");
    }

    #[test]
    fn client_table_round_trips() {
        let records = small_run();
        let mut buf = Vec::new();
        emit_client_table(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = parse_client_table(&text, "t").unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[2].role, Role::Dnp);
        assert_eq!(rows[2].loss, None);
        assert_eq!(rows[0].epsilon, Some(f64::INFINITY));
        assert_eq!(rows[0].accuracy, Some(0.875));
        // emitted -> parsed -> emitted is byte-stable
        let reparsed: Vec<RoundRecord> = rows
            .iter()
            .map(|r| RoundRecord {
                round: r.round,
                node: r.node,
                role: r.role,
                loss: r.loss,
                accuracy: r.accuracy,
                epsilon: r.epsilon.unwrap_or(f64::INFINITY),
            })
            .collect();
        let mut buf2 = Vec::new();
        emit_client_table(&reparsed, &mut buf2).unwrap();
        assert_eq!(text, String::from_utf8(buf2).unwrap());
    }

    #[test]
    fn parser_rejects_malformed_tables() {
        assert!(parse_client_table("", "t").is_err());
        assert!(parse_client_table("nope\n", "t").is_err());
        let bad_fields = format!("{CLIENT_HEADER}\n0,0,aggregator,1.0\n");
        let err = parse_client_table(&bad_fields, "t").unwrap_err();
        assert!(matches!(err, Error::Table { line: 2, .. }));
        let bad_dnp = format!("{CLIENT_HEADER}\n0,0,dnp,1.0,,\n");
        assert!(parse_client_table(&bad_dnp, "t").is_err());
        let bad_role = format!("{CLIENT_HEADER}\n0,0,server,1.0,1.0,inf\n");
        assert!(parse_client_table(&bad_role, "t").is_err());
        let bad_float = format!("{SERVER_HEADER}\n0,0,acc,0.5\n");
        assert!(parse_server_table(&bad_float, "t").is_err());
    }

    #[test]
    fn compare_run_against_itself_is_zero() {
        let mut buf = Vec::new();
        emit_server_table(&small_run(), &mut buf).unwrap();
        let rows = parse_server_table(&String::from_utf8(buf).unwrap(), "t").unwrap();
        let cmp = compare_server_tables(&rows, &rows).unwrap();
        assert_eq!(cmp.len(), 2);
        assert!(cmp.iter().all(|r| r.delta == 0.0));
        let mut out = Vec::new();
        emit_compare_table(&cmp, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(COMPARE_HEADER));
        assert!(text.contains("0.000000"));
    }

    #[test]
    fn compare_rejects_mismatched_rounds() {
        let a = vec![ServerRow {
            round: 0,
            aggregator: 0,
            accuracy: 0.5,
            loss: 1.0,
        }];
        assert!(compare_server_tables(&a, &[]).is_err());
        let b = vec![ServerRow {
            round: 1,
            aggregator: 0,
            accuracy: 0.5,
            loss: 1.0,
        }];
        assert!(compare_server_tables(&a, &b).is_err());
    }

    #[test]
    fn wide_table_pivots_rounds() {
        let mut buf = Vec::new();
        emit_client_table_wide(&small_run(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("round,node0_role,node0_loss,node0_accuracy,node1_role"));
        assert!(lines[1].contains(",DNP,,"));
        assert!(lines[1].starts_with("0,aggregator,"));
    }
}
