use std::io::{Read, Write};
use std::path::Path;

use chrono::DateTime;
use serde::Serialize;

use super::calendar::parse_timestamp;
use super::{MarketTape, Sign, TradingCalendar, Transaction};
use crate::error::{Error, Result};

const REQUIRED: [&str; 5] = ["timestamp", "member_id", "sign", "shares", "price"];

/// Ingestion options.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaConfig {
    /// Abort when more than this fraction of rows is malformed.
    pub max_malformed_fraction: f64,
    /// The feed lists both sides of each trade; count each trade once in
    /// market volume.
    pub dedup_both_sides: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            max_malformed_fraction: 0.001,
            dedup_both_sides: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalformedRow {
    /// 1-based line in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub malformed: Vec<MalformedRow>,
    /// Rows whose timestamp was earlier than the row before them.
    pub reordered: usize,
    pub duplicate_pairs: usize,
}

struct Columns {
    timestamp: usize,
    member: usize,
    sign: usize,
    shares: usize,
    price: usize,
    bid: Option<usize>,
    ask: Option<usize>,
}

impl Columns {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        for name in REQUIRED {
            if find(name).is_none() {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        Ok(Self {
            timestamp: find("timestamp").unwrap(),
            member: find("member_id").unwrap(),
            sign: find("sign").unwrap(),
            shares: find("shares").unwrap(),
            price: find("price").unwrap(),
            bid: find("bid"),
            ask: find("ask"),
        })
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing field `{name}`"))
}

fn optional_price(rec: &csv::StringRecord, idx: Option<usize>, name: &str) -> std::result::Result<Option<f64>, String> {
    match idx.and_then(|i| rec.get(i)).map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => {
            let v: f64 = s.parse().map_err(|_| format!("bad {name} `{s}`"))?;
            if v > 0.0 {
                Ok(Some(v))
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        }
    }
}

fn parse_row(rec: &csv::StringRecord, cols: &Columns) -> std::result::Result<Transaction, String> {
    let timestamp = parse_timestamp(field(rec, cols.timestamp, "timestamp")?).map_err(|e| e.to_string())?;
    let member_id = field(rec, cols.member, "member_id")?.to_string();
    if member_id.is_empty() {
        return Err("empty member_id".into());
    }
    let sign: Sign = field(rec, cols.sign, "sign")?
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let shares_s = field(rec, cols.shares, "shares")?;
    let shares: i64 = shares_s.parse().map_err(|_| format!("bad shares `{shares_s}`"))?;
    if shares <= 0 {
        return Err(format!("shares must be positive, got {shares}"));
    }
    let price_s = field(rec, cols.price, "price")?;
    let price: f64 = price_s.parse().map_err(|_| format!("bad price `{price_s}`"))?;
    if !(price > 0.0) || !price.is_finite() {
        return Err(format!("price must be positive, got {price_s}"));
    }
    let best_bid = optional_price(rec, cols.bid, "bid")?;
    let best_ask = optional_price(rec, cols.ask, "ask")?;
    if let (Some(b), Some(a)) = (best_bid, best_ask) {
        if b >= a {
            return Err(format!("bid {b} is not below ask {a}"));
        }
    }
    Ok(Transaction {
        timestamp,
        member_id,
        sign,
        shares: shares as u64,
        price,
        best_bid,
        best_ask,
        prev_price: None,
    })
}

/// Parse a transaction CSV from any reader. See [`load_transactions`].
pub fn read_transactions<R: Read>(
    reader: R,
    schema: &SchemaConfig,
    calendar: Option<TradingCalendar>,
) -> Result<(MarketTape, LoadReport)> {
    let calendar = calendar.unwrap_or_else(TradingCalendar::continuous);
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = Columns::from_headers(rdr.headers()?)?;
    let mut report = LoadReport::default();
    let mut txs = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for rec in rdr.records() {
        let rec = rec?;
        report.rows_read += 1;
        let line = rec.position().map_or(0, |p| p.line());
        match parse_row(&rec, &cols) {
            Ok(tx) if !calendar.contains(tx.timestamp) => report.malformed.push(MalformedRow {
                line,
                reason: "timestamp outside trading sessions".into(),
            }),
            Ok(tx) => {
                if tx.timestamp < last_time {
                    report.reordered += 1;
                }
                last_time = tx.timestamp;
                txs.push(tx);
            }
            Err(reason) => report.malformed.push(MalformedRow { line, reason }),
        }
    }
    let bad = report.malformed.len();
    if bad > 0 && bad as f64 > schema.max_malformed_fraction * report.rows_read as f64 {
        let first = &report.malformed[0];
        return Err(Error::TooManyMalformed {
            malformed: bad,
            total: report.rows_read,
            limit_fraction: schema.max_malformed_fraction,
            first: format!("line {}: {}", first.line, first.reason),
        });
    }
    if bad > 0 {
        log::warn!("{bad} malformed transaction rows skipped");
    }
    report.rows_accepted = txs.len();
    let tape = MarketTape::new(txs, calendar, schema.dedup_both_sides)?;
    report.duplicate_pairs = tape.duplicate_pairs();
    Ok((tape, report))
}

/// Load, validate and sort a transaction CSV.
///
/// Required columns: `timestamp, member_id, sign, shares, price`; optional
/// `bid, ask`. Unknown columns are ignored. Malformed rows are reported with
/// their line number; the load fails if they exceed
/// `schema.max_malformed_fraction` of the file.
pub fn load_transactions(
    path: &Path,
    schema: &SchemaConfig,
    calendar: Option<TradingCalendar>,
) -> Result<(MarketTape, LoadReport)> {
    read_transactions(std::fs::File::open(path)?, schema, calendar)
}

pub(crate) fn format_timestamp(t: f64) -> String {
    let secs = t.floor();
    let nanos = ((t - secs) * 1e9).round() as u32;
    let (secs, nanos) = if nanos >= 1_000_000_000 {
        (secs + 1.0, 0)
    } else {
        (secs, nanos)
    };
    DateTime::from_timestamp(secs as i64, nanos)
        .map(|d| d.naive_utc().format("%Y-%m-%dT%H:%M:%S%.f").to_string())
        .unwrap_or_else(|| t.to_string())
}

/// Write transactions in the ingestion format.
pub fn write_transactions<W: Write>(writer: W, txs: &[Transaction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "member_id", "sign", "shares", "price", "bid", "ask"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for tx in txs {
        w.write_record([
            format_timestamp(tx.timestamp),
            tx.member_id.clone(),
            tx.sign.to_string(),
            tx.shares.to_string(),
            tx.price.to_string(),
            opt(tx.best_bid),
            opt(tx.best_ask),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "timestamp,member_id,sign,shares,price,bid,ask
2004-01-02T09:00:01,A,+1,100,10.02,10.00,10.02
2004-01-02T09:00:00.5,B,-1,50,10.00,10.00,10.02
2004-01-02T09:00:02,A,-1,10,10.01,,
";

    #[test]
    fn well_formed_fixture() {
        let (tape, report) = read_transactions(GOOD.as_bytes(), &SchemaConfig::default(), None).unwrap();
        assert_eq!(tape.len(), 3);
        assert!(report.malformed.is_empty());
        assert_eq!(report.reordered, 1);
        assert_eq!(tape.transactions()[0].member_id, "B");
        assert_eq!(tape.transactions()[2].best_bid, None);
    }

    #[test]
    fn zero_shares_rejected_with_line() {
        let text = format!("{GOOD}2004-01-02T09:00:03,C,+1,0,10.01,,\n");
        let lenient = SchemaConfig {
            max_malformed_fraction: 1.0,
            ..SchemaConfig::default()
        };
        let (tape, report) = read_transactions(text.as_bytes(), &lenient, None).unwrap();
        assert_eq!(tape.len(), 3);
        assert_eq!(report.malformed.len(), 1);
        assert_eq!(report.malformed[0].line, 5);
        assert!(report.malformed[0].reason.contains("shares"));

        match read_transactions(text.as_bytes(), &SchemaConfig::default(), None) {
            Err(Error::TooManyMalformed {
                malformed: 1,
                total: 4,
                first,
                ..
            }) => assert!(first.starts_with("line 5")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column() {
        let text = "timestamp,member_id,shares,price\n2004-01-02T09:00:00,A,1,1.0\n";
        assert!(matches!(
            read_transactions(text.as_bytes(), &SchemaConfig::default(), None),
            Err(Error::MissingColumn(c)) if c == "sign"
        ));
    }

    #[test]
    fn bad_timestamp_and_price_are_row_errors() {
        let text = "timestamp,member_id,sign,shares,price\nnot-a-time,A,1,1,1.0\n2004-01-02T09:00:00,A,1,1,-2\n2004-01-02T09:00:00,A,1,1,2\n";
        let lenient = SchemaConfig {
            max_malformed_fraction: 1.0,
            ..SchemaConfig::default()
        };
        let (tape, report) = read_transactions(text.as_bytes(), &lenient, None).unwrap();
        assert_eq!(tape.len(), 1);
        let lines: Vec<u64> = report.malformed.iter().map(|m| m.line).collect();
        assert_eq!(lines, vec![2, 3]);
    }

    #[test]
    fn write_then_read() {
        let (tape, _) = read_transactions(GOOD.as_bytes(), &SchemaConfig::default(), None).unwrap();
        let mut buf = Vec::new();
        write_transactions(&mut buf, tape.transactions()).unwrap();
        let (again, _) = read_transactions(buf.as_slice(), &SchemaConfig::default(), None).unwrap();
        assert_eq!(tape.transactions(), again.transactions());
    }
}
