use std::collections::BTreeMap;

use super::{Sign, TradingCalendar, Transaction};
use crate::error::{Error, Result};

/// Every transaction of one stock, time-ordered, plus its calendar.
///
/// Market volume is indexed by cumulative sums so that
/// [`MarketTape::market_volume_between`] is a pair of binary searches. The
/// sums carry their rounding error alongside, so a short window late in a
/// long tape still comes out to a few ulps.
#[derive(Debug, Clone)]
pub struct MarketTape {
    transactions: Vec<Transaction>,
    calendar: TradingCalendar,
    volume_times: Vec<f64>,
    volume_prefix: Vec<(f64, f64)>,
    duplicate_pairs: usize,
}

impl MarketTape {
    /// Build a tape. Rows are stable-sorted by time and missing
    /// `prev_price` values are filled from the tape itself. With
    /// `dedup_both_sides`, a buy and a sell by different members with equal
    /// time, price and size are taken as the two sides of one trade and
    /// counted once in market volume.
    pub fn new(mut transactions: Vec<Transaction>, calendar: TradingCalendar, dedup_both_sides: bool) -> Result<Self> {
        if let Some(bad) = transactions.iter().find(|t| !(t.price > 0.0) || t.shares == 0) {
            return Err(Error::InvalidArgument(format!(
                "transaction at {} has non-positive price or shares",
                bad.timestamp
            )));
        }
        transactions.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

        let mut last_distinct: Option<f64> = None;
        let mut last_price: Option<f64> = None;
        for tx in &mut transactions {
            if let Some(p) = last_price {
                if p != tx.price {
                    last_distinct = Some(p);
                }
            }
            if tx.prev_price.is_none() {
                tx.prev_price = last_distinct;
            }
            last_price = Some(tx.price);
        }

        let counted = if dedup_both_sides {
            pair_sides(&transactions)
        } else {
            vec![true; transactions.len()]
        };
        let duplicate_pairs = counted.iter().filter(|&&c| !c).count();
        let mut volume_times = Vec::with_capacity(transactions.len());
        let mut volume_prefix = Vec::with_capacity(transactions.len() + 1);
        volume_prefix.push((0.0, 0.0));
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for (tx, keep) in transactions.iter().zip(counted) {
            if keep {
                // Knuth two-sum.
                let v = tx.euro_volume();
                let s = hi + v;
                let b = s - hi;
                lo += (hi - (s - b)) + (v - b);
                hi = s;
                volume_times.push(tx.timestamp);
                volume_prefix.push((hi, lo));
            }
        }
        Ok(Self {
            transactions,
            calendar,
            volume_times,
            volume_prefix,
            duplicate_pairs,
        })
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Number of rows dropped from volume as the second side of a trade.
    pub fn duplicate_pairs(&self) -> usize {
        self.duplicate_pairs
    }

    /// Euro volume of all trades with timestamp in `[start, end]`.
    pub fn market_volume_between(&self, start: f64, end: f64) -> Result<f64> {
        if start > end {
            return Err(Error::InvalidArgument(format!("start {start} is after end {end}")));
        }
        let lo = self.volume_times.partition_point(|&t| t < start);
        let hi = self.volume_times.partition_point(|&t| t <= end);
        let (a, b) = (self.volume_prefix[lo], self.volume_prefix[hi]);
        Ok((b.0 - a.0) + (b.1 - a.1))
    }

    /// Each member's transactions in time order.
    pub fn by_member(&self) -> BTreeMap<&str, Vec<&Transaction>> {
        let mut map: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
        for tx in &self.transactions {
            map.entry(tx.member_id.as_str()).or_default().push(tx);
        }
        map
    }

    /// Last traded price of each calendar day.
    pub fn daily_closes(&self) -> Vec<(chrono::NaiveDate, f64)> {
        let mut closes: Vec<(chrono::NaiveDate, f64)> = Vec::new();
        for tx in &self.transactions {
            let d = super::calendar::date_of(tx.timestamp);
            match closes.last_mut() {
                Some(last) if last.0 == d => last.1 = tx.price,
                _ => closes.push((d, tx.price)),
            }
        }
        closes
    }
}

/// Mark which rows count toward market volume when a feed lists both sides
/// of each trade. Returns `false` for the second row of each matched pair.
fn pair_sides(txs: &[Transaction]) -> Vec<bool> {
    let mut keep = vec![true; txs.len()];
    let mut i = 0;
    while i < txs.len() {
        let mut j = i;
        while j < txs.len() && txs[j].timestamp == txs[i].timestamp {
            j += 1;
        }
        let mut used = vec![false; j - i];
        for a in i..j {
            if used[a - i] || txs[a].sign != Sign::Buy {
                continue;
            }
            let partner = (i..j).find(|&b| {
                !used[b - i]
                    && txs[b].sign == Sign::Sell
                    && txs[b].price == txs[a].price
                    && txs[b].shares == txs[a].shares
                    && txs[b].member_id != txs[a].member_id
            });
            if let Some(b) = partner {
                used[a - i] = true;
                used[b - i] = true;
                keep[a.max(b)] = false;
            }
        }
        i = j;
    }
    keep
}
