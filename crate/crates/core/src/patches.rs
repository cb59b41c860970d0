//! From decoded state paths to labeled patches and their metrics.

use std::borrow::Borrow;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::HmmModel;
use crate::trades::{is_market_order, MarketTape, Sign, Transaction};
use crate::BUY_SYMBOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Buy,
    Neutral,
    Sell,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Buy, Label::Neutral, Label::Sell];

    pub fn is_directional(self) -> bool {
        self != Label::Neutral
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Buy => "buy",
            Label::Neutral => "neutral",
            Label::Sell => "sell",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" => Ok(Label::Buy),
            "neutral" => Ok(Label::Neutral),
            "sell" => Ok(Label::Sell),
            other => Err(Error::Parse(format!("unknown label `{other}`"))),
        }
    }
}

/// Which fitted state plays buy, neutral and sell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateLabeling {
    labels: Vec<Label>,
    buy_emission: Vec<f64>,
    /// Two states had identical buy emissions; the order fell back to the
    /// state index.
    pub ambiguous: bool,
}

impl StateLabeling {
    pub fn label(&self, state: usize) -> Label {
        self.labels[state]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn buy_emission(&self, state: usize) -> f64 {
        self.buy_emission[state]
    }

    pub fn state_of(&self, label: Label) -> usize {
        self.labels
            .iter()
            .position(|&l| l == label)
            .expect("labeling is bijective")
    }
}

/// Rank three states by buy probability: highest is buy, lowest sell.
pub fn label_from_buy_emissions(buy: &[f64]) -> Result<StateLabeling> {
    if buy.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "labeling needs exactly 3 states, got {}",
            buy.len()
        )));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| buy[b].total_cmp(&buy[a]).then(a.cmp(&b)));
    let mut labels = vec![Label::Neutral; 3];
    labels[order[0]] = Label::Buy;
    labels[order[1]] = Label::Neutral;
    labels[order[2]] = Label::Sell;
    let ambiguous = buy[0] == buy[1] || buy[1] == buy[2] || buy[0] == buy[2];
    Ok(StateLabeling {
        labels,
        buy_emission: buy.to_vec(),
        ambiguous,
    })
}

/// Label a fitted three-state, two-symbol HMM.
pub fn label_states(model: &HmmModel) -> Result<StateLabeling> {
    if model.num_states() != 3 || model.num_symbols() != 2 {
        return Err(Error::InvalidArgument(format!(
            "labeling needs a 3-state, 2-symbol model, got {} states and {} symbols",
            model.num_states(),
            model.num_symbols()
        )));
    }
    let buy: Vec<f64> = (0..3).map(|j| model.emission(j, BUY_SYMBOL)).collect();
    label_from_buy_emissions(&buy)
}

/// Maximal constant runs of `path` as `(state, first, last)`, inclusive.
pub fn state_runs(path: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for t in 1..=path.len() {
        if t == path.len() || path[t] != path[start] {
            runs.push((path[start], start, t - 1));
            start = t;
        }
    }
    runs
}

/// A maximal run of one decoded state in a member's trade sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub member_id: String,
    pub label: Label,
    pub state: usize,
    /// Inclusive indices into the member's transaction sequence.
    pub first_index: usize,
    pub last_index: usize,
    pub t_first: f64,
    pub t_last: f64,
    /// Trading-time seconds from the first to the last trade.
    pub duration_seconds: f64,
    pub n_buy: usize,
    pub n_sell: usize,
    pub n_tot: usize,
    pub v_buy: f64,
    pub v_sell: f64,
    pub v_tot: f64,
    pub buy_volume_ratio: f64,
    pub market_order_count: usize,
    /// Trades whose initiator could be determined.
    pub classified_count: usize,
    /// `market_order_count / classified_count`; empty when nothing was
    /// classified.
    pub market_order_fraction: Option<f64>,
    /// Market euro volume over `[t_first, t_last]`.
    pub market_volume: f64,
    pub participation_rate: f64,
}

/// Slack allowed when rounding pushes `V_tot / U` just above one.
const PARTICIPATION_SLACK: f64 = 1e-9;

/// Cut `path` into patches and compute every metric. `member_txs` must be
/// the member's time-ordered trades, one per path position; `index_offset`
/// is added to the reported indices (used when a member's sequence is
/// split by year).
pub fn extract_patches<T: Borrow<Transaction>>(
    path: &[usize],
    labeling: &StateLabeling,
    member_txs: &[T],
    tape: &MarketTape,
    index_offset: usize,
) -> Result<Vec<Patch>> {
    if path.len() != member_txs.len() {
        return Err(Error::InvalidArgument(format!(
            "state path has {} entries but the member has {} transactions",
            path.len(),
            member_txs.len()
        )));
    }
    if let Some(&s) = path.iter().find(|&&s| s >= labeling.labels().len()) {
        return Err(Error::InvalidArgument(format!("state {s} has no label")));
    }
    let mut out = Vec::new();
    for (state, first, last) in state_runs(path) {
        let txs = &member_txs[first..=last];
        let head: &Transaction = txs[0].borrow();
        let tail: &Transaction = txs[txs.len() - 1].borrow();
        let (mut n_buy, mut n_sell, mut v_buy, mut v_sell) = (0, 0, 0.0, 0.0);
        let (mut market_orders, mut classified) = (0, 0);
        for tx in txs {
            let tx: &Transaction = tx.borrow();
            match tx.sign {
                Sign::Buy => {
                    n_buy += 1;
                    v_buy += tx.euro_volume();
                }
                Sign::Sell => {
                    n_sell += 1;
                    v_sell += tx.euro_volume();
                }
            }
            if let Some(mo) = is_market_order(tx) {
                classified += 1;
                market_orders += usize::from(mo);
            }
        }
        let v_tot = v_buy + v_sell;
        let duration = tape.calendar().trading_time_elapsed(head.timestamp, tail.timestamp)?;
        let market_volume = tape.market_volume_between(head.timestamp, tail.timestamp)?;
        let mut participation_rate = v_tot / market_volume;
        if participation_rate > 1.0 {
            if participation_rate <= 1.0 + PARTICIPATION_SLACK {
                participation_rate = 1.0;
            } else {
                return Err(Error::InvalidArgument(format!(
                    "member {} trades at {} are missing from the market tape",
                    head.member_id, head.timestamp
                )));
            }
        }
        out.push(Patch {
            member_id: head.member_id.clone(),
            label: labeling.label(state),
            state,
            first_index: first + index_offset,
            last_index: last + index_offset,
            t_first: head.timestamp,
            t_last: tail.timestamp,
            duration_seconds: duration.seconds,
            n_buy,
            n_sell,
            n_tot: n_buy + n_sell,
            v_buy,
            v_sell,
            v_tot,
            buy_volume_ratio: v_buy / v_tot,
            market_order_count: market_orders,
            classified_count: classified,
            market_order_fraction: (classified > 0).then(|| market_orders as f64 / classified as f64),
            market_volume,
            participation_rate,
        });
    }
    Ok(out)
}

/// Keep patches with at least `n_min` transactions.
pub fn filter_min_length(patches: &[Patch], n_min: usize) -> Vec<Patch> {
    if n_min == 0 {
        log::warn!("minimum patch length 0 keeps every patch");
    }
    patches.iter().filter(|p| p.n_tot >= n_min).cloned().collect()
}

/// Order patches by member, then start time, then first index.
pub fn sort_patches(patches: &mut [Patch]) {
    patches.sort_by(|a, b| {
        a.member_id
            .cmp(&b.member_id)
            .then(a.t_first.total_cmp(&b.t_first))
            .then(a.first_index.cmp(&b.first_index))
    });
}

/// Write the patch table with its fixed header.
pub fn write_patches_csv<W: Write>(writer: W, patches: &[Patch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if patches.is_empty() {
        w.write_record(PATCH_COLUMNS)?;
    }
    for p in patches {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_patches_csv<R: Read>(reader: R) -> Result<Vec<Patch>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Column order of the patch CSV.
pub const PATCH_COLUMNS: [&str; 20] = [
    "member_id",
    "label",
    "state",
    "first_index",
    "last_index",
    "t_first",
    "t_last",
    "duration_seconds",
    "n_buy",
    "n_sell",
    "n_tot",
    "v_buy",
    "v_sell",
    "v_tot",
    "buy_volume_ratio",
    "market_order_count",
    "classified_count",
    "market_order_fraction",
    "market_volume",
    "participation_rate",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trades::TradingCalendar;

    fn tx(t: f64, sign: Sign, price: f64) -> Transaction {
        Transaction {
            timestamp: t,
            member_id: "M1".into(),
            sign,
            shares: 1,
            price,
            best_bid: None,
            best_ask: None,
            prev_price: None,
        }
    }

    fn labeling() -> StateLabeling {
        label_from_buy_emissions(&[0.9, 0.5, 0.1]).unwrap()
    }

    #[test]
    fn reference_emissions_label_in_order() {
        let l = label_from_buy_emissions(&[0.92, 0.50, 0.075]).unwrap();
        assert_eq!(l.labels(), &[Label::Buy, Label::Neutral, Label::Sell]);
        assert!(!l.ambiguous);
    }

    #[test]
    fn permuted_emissions() {
        let l = label_from_buy_emissions(&[0.1, 0.9, 0.5]).unwrap();
        assert_eq!(l.labels(), &[Label::Sell, Label::Buy, Label::Neutral]);
        assert_eq!(l.state_of(Label::Buy), 1);
    }

    #[test]
    fn equal_emissions_flagged() {
        let l = label_from_buy_emissions(&[0.5, 0.5, 0.5]).unwrap();
        assert!(l.ambiguous);
        assert_eq!(l.labels(), &[Label::Buy, Label::Neutral, Label::Sell]);
    }

    #[test]
    fn label_states_needs_three_states() {
        let m = HmmModel::new(vec![vec![1.0]], vec![vec![0.5, 0.5]], vec![1.0]).unwrap();
        assert!(label_states(&m).is_err());
    }

    #[test]
    fn run_length_encoding() {
        let path = [0, 0, 0, 1, 1, 2];
        assert_eq!(state_runs(&path), vec![(0, 0, 2), (1, 3, 4), (2, 5, 5)]);
        let txs: Vec<Transaction> = (0..6).map(|i| tx(i as f64, Sign::Buy, 10.0)).collect();
        let tape = MarketTape::new(txs.clone(), TradingCalendar::continuous(), false).unwrap();
        let patches = extract_patches(&path, &labeling(), &txs, &tape, 0).unwrap();
        let lens: Vec<usize> = patches.iter().map(|p| p.n_tot).collect();
        assert_eq!(lens, vec![3, 2, 1]);
        assert_eq!(patches.iter().map(|p| p.n_tot).sum::<usize>(), 6);
    }

    #[test]
    fn sole_trader_has_full_participation() {
        let txs: Vec<Transaction> = (0..5).map(|i| tx(i as f64, Sign::Buy, 10.0)).collect();
        let tape = MarketTape::new(txs.clone(), TradingCalendar::continuous(), false).unwrap();
        let p = extract_patches(&[0; 5], &labeling(), &txs, &tape, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].participation_rate, 1.0);
        assert_eq!(p[0].buy_volume_ratio, 1.0);
        assert_eq!(p[0].label, Label::Buy);
        assert_eq!(p[0].market_order_fraction, None);
    }

    #[test]
    fn quarter_participation() {
        let mine: Vec<Transaction> = (0..2).map(|i| tx(i as f64 * 10.0, Sign::Sell, 50.0)).collect();
        let mut all = mine.clone();
        for i in 0..3 {
            let mut other = tx(1.0 + i as f64, Sign::Buy, 100.0);
            other.member_id = "M2".into();
            all.push(other);
        }
        let tape = MarketTape::new(all, TradingCalendar::continuous(), false).unwrap();
        let p = extract_patches(&[2, 2], &labeling(), &mine, &tape, 0).unwrap();
        assert_eq!(p[0].v_tot, 100.0);
        assert_eq!(p[0].market_volume, 400.0);
        assert_eq!(p[0].participation_rate, 0.25);
        assert_eq!(p[0].buy_volume_ratio, 0.0);
        assert_eq!(p[0].duration_seconds, 10.0);
    }

    #[test]
    fn length_mismatch() {
        let txs = vec![tx(0.0, Sign::Buy, 1.0)];
        let tape = MarketTape::new(txs.clone(), TradingCalendar::continuous(), false).unwrap();
        assert!(extract_patches(&[0, 0], &labeling(), &txs, &tape, 0).is_err());
    }

    #[test]
    fn min_length_filter() {
        let txs: Vec<Transaction> = (0..38).map(|i| tx(i as f64, Sign::Buy, 1.0)).collect();
        let tape = MarketTape::new(txs.clone(), TradingCalendar::continuous(), false).unwrap();
        let mut path = vec![0; 3];
        path.extend(vec![1; 10]);
        path.extend(vec![2; 25]);
        let patches = extract_patches(&path, &labeling(), &txs, &tape, 0).unwrap();
        let kept: Vec<usize> = filter_min_length(&patches, 10).iter().map(|p| p.n_tot).collect();
        assert_eq!(kept, vec![10, 25]);
        assert_eq!(filter_min_length(&patches, 1), patches);
        assert_eq!(filter_min_length(&patches, 0), patches);
    }

    #[test]
    fn csv_round_trip() {
        let txs: Vec<Transaction> = (0..7)
            .map(|i| tx(i as f64 * 0.3, if i % 3 == 0 { Sign::Sell } else { Sign::Buy }, 9.87))
            .collect();
        let tape = MarketTape::new(txs.clone(), TradingCalendar::continuous(), false).unwrap();
        let patches = extract_patches(&[0, 0, 1, 1, 1, 2, 0], &labeling(), &txs, &tape, 5).unwrap();
        let mut buf = Vec::new();
        write_patches_csv(&mut buf, &patches).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with(&PATCH_COLUMNS.join(",")));
        assert_eq!(read_patches_csv(buf.as_slice()).unwrap(), patches);
        assert_eq!(patches[0].first_index, 5);
    }
}
