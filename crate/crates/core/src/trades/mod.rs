//! Transactions, the market tape, trading calendars and trade-initiator
//! classification.

mod calendar;
mod csv_io;
mod tape;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use calendar::{date_of, year_of, Elapsed, TradingCalendar};
pub use csv_io::{load_transactions, read_transactions, write_transactions, LoadReport, MalformedRow, SchemaConfig};
pub use tape::MarketTape;

/// Trade direction from the member's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Buy,
    Sell,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Buy => 1,
            Sign::Sell => -1,
        }
    }

    /// Observation symbol: sell is `0`, buy is `1`.
    pub fn symbol(self) -> usize {
        match self {
            Sign::Buy => crate::BUY_SYMBOL,
            Sign::Sell => crate::SELL_SYMBOL,
        }
    }

    pub fn from_symbol(symbol: usize) -> Option<Sign> {
        match symbol {
            crate::BUY_SYMBOL => Some(Sign::Buy),
            crate::SELL_SYMBOL => Some(Sign::Sell),
            _ => None,
        }
    }

    pub fn opposite(self) -> Sign {
        match self {
            Sign::Buy => Sign::Sell,
            Sign::Sell => Sign::Buy,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Buy => "+1",
            Sign::Sell => "-1",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "1" | "+1" => Ok(Sign::Buy),
            "-1" => Ok(Sign::Sell),
            other => Err(Error::Parse(format!("sign must be +1 or -1, got `{other}`"))),
        }
    }
}

/// One on-book trade as seen by one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
    pub member_id: String,
    pub sign: Sign,
    pub shares: u64,
    pub price: f64,
    pub best_bid: Option<f64>,
    pub best_ask: Option<f64>,
    /// Last trade price on the tape that differs from `price`.
    pub prev_price: Option<f64>,
}

impl Transaction {
    pub fn euro_volume(&self) -> f64 {
        self.shares as f64 * self.price
    }
}

/// Which side initiated a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initiator {
    BuyerInitiated,
    SellerInitiated,
    Unclassified,
}

impl Initiator {
    /// The side whose order was the aggressor, if known.
    pub fn side(self) -> Option<Sign> {
        match self {
            Initiator::BuyerInitiated => Some(Sign::Buy),
            Initiator::SellerInitiated => Some(Sign::Sell),
            Initiator::Unclassified => None,
        }
    }
}

impl fmt::Display for Initiator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Initiator::BuyerInitiated => "buyer_initiated",
            Initiator::SellerInitiated => "seller_initiated",
            Initiator::Unclassified => "unclassified",
        })
    }
}

/// Relative tolerance for comparing a price against the midquote.
const PRICE_EPS: f64 = 1e-9;

fn cmp_price(a: f64, b: f64) -> std::cmp::Ordering {
    if (a - b).abs() <= PRICE_EPS * a.abs().max(b.abs()) {
        std::cmp::Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Lee-Ready: compare the price with the prevailing midquote; at the
/// midquote, or without quotes, fall back to the tick test against the last
/// different price.
pub fn classify_initiator(tx: &Transaction) -> Initiator {
    use std::cmp::Ordering::*;
    if let (Some(bid), Some(ask)) = (tx.best_bid, tx.best_ask) {
        match cmp_price(tx.price, 0.5 * (bid + ask)) {
            Greater => return Initiator::BuyerInitiated,
            Less => return Initiator::SellerInitiated,
            Equal => {}
        }
    }
    match tx.prev_price.map(|p| cmp_price(tx.price, p)) {
        Some(Greater) => Initiator::BuyerInitiated,
        Some(Less) => Initiator::SellerInitiated,
        _ => Initiator::Unclassified,
    }
}

/// True when the member was the aggressor, i.e. traded with a market order.
/// `None` when the trade cannot be classified.
pub fn is_market_order(tx: &Transaction) -> Option<bool> {
    classify_initiator(tx).side().map(|s| s == tx.sign)
}
