//! HMM patches counted inside an externally supplied coarse segmentation.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patches::{Label, Patch};

/// One segment of an external segmentation, typed by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPatch {
    pub member_id: String,
    #[serde(rename = "type")]
    pub segment_type: Label,
    pub first_index: usize,
    pub last_index: usize,
}

impl SegmentPatch {
    pub fn n_seg(&self) -> usize {
        self.last_index - self.first_index + 1
    }
}

/// Read `member_id,type,first_index,last_index` rows. Segments of each
/// member must be disjoint.
pub fn read_segments_csv<R: Read>(reader: R) -> Result<Vec<SegmentPatch>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let segments: Vec<SegmentPatch> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    validate_segments(&segments)?;
    Ok(segments)
}

pub fn write_segments_csv<W: Write>(writer: W, segments: &[SegmentPatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in segments {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

fn validate_segments(segments: &[SegmentPatch]) -> Result<()> {
    let mut by_member: BTreeMap<&str, Vec<&SegmentPatch>> = BTreeMap::new();
    for s in segments {
        if s.last_index < s.first_index {
            return Err(Error::InvalidArgument(format!(
                "segment of {} ends at {} before it starts at {}",
                s.member_id, s.last_index, s.first_index
            )));
        }
        by_member.entry(&s.member_id).or_default().push(s);
    }
    for (member, mut segs) in by_member {
        segs.sort_by_key(|s| s.first_index);
        if let Some(w) = segs.windows(2).find(|w| w[1].first_index <= w[0].last_index) {
            return Err(Error::InvalidArgument(format!(
                "segments of {member} overlap at index {}",
                w[1].first_index
            )));
        }
    }
    Ok(())
}

/// Which index of an HMM patch decides the segment it is counted in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    #[default]
    Midpoint,
    FirstIndex,
}

fn slot(label: Label) -> usize {
    match label {
        Label::Buy => 0,
        Label::Neutral => 1,
        Label::Sell => 2,
    }
}

/// HMM content of one segment, indexed buy, neutral, sell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentComposition {
    pub segment: SegmentPatch,
    pub patch_counts: [usize; 3],
    /// Transactions by HMM state; sums to `n_seg`.
    pub tx_counts: [usize; 3],
}

impl SegmentComposition {
    pub fn patches(&self, label: Label) -> usize {
        self.patch_counts[slot(label)]
    }

    pub fn transactions(&self, label: Label) -> usize {
        self.tx_counts[slot(label)]
    }
}

/// Count HMM patches and transactions inside every segment. The HMM
/// patches of each member must cover every index its segments use.
pub fn segment_composition(
    hmm_patches: &[Patch],
    segments: &[SegmentPatch],
    assignment: Assignment,
) -> Result<Vec<SegmentComposition>> {
    validate_segments(segments)?;
    let mut by_member: BTreeMap<&str, Vec<&Patch>> = BTreeMap::new();
    for p in hmm_patches {
        by_member.entry(&p.member_id).or_default().push(p);
    }
    for patches in by_member.values_mut() {
        patches.sort_by_key(|p| p.first_index);
    }
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let patches = by_member.get(seg.member_id.as_str()).ok_or_else(|| {
            Error::InvalidArgument(format!("member {} has segments but no HMM patches", seg.member_id))
        })?;
        // First patch that ends at or after the segment start.
        let start = patches.partition_point(|p| p.last_index < seg.first_index);
        let mut comp = SegmentComposition {
            segment: seg.clone(),
            patch_counts: [0; 3],
            tx_counts: [0; 3],
        };
        let mut covered_to = seg.first_index;
        for p in patches[start..].iter().take_while(|p| p.first_index <= seg.last_index) {
            if p.first_index > covered_to {
                break;
            }
            let lo = p.first_index.max(seg.first_index);
            let hi = p.last_index.min(seg.last_index);
            comp.tx_counts[slot(p.label)] += hi - lo + 1;
            covered_to = hi + 1;
            let anchor = match assignment {
                Assignment::Midpoint => p.first_index + (p.last_index - p.first_index) / 2,
                Assignment::FirstIndex => p.first_index,
            };
            if (seg.first_index..=seg.last_index).contains(&anchor) {
                comp.patch_counts[slot(p.label)] += 1;
            }
        }
        if covered_to <= seg.last_index {
            return Err(Error::InvalidArgument(format!(
                "segment {}..={} of {} is not covered by HMM patches at index {}",
                seg.first_index, seg.last_index, seg.member_id, covered_to
            )));
        }
        out.push(comp);
    }
    Ok(out)
}

/// Lower edge of the power-of-two bin holding `n_seg`.
pub fn nseg_bin(n_seg: usize) -> usize {
    1 << (usize::BITS - 1 - n_seg.max(1).leading_zeros())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTabRow {
    pub segment_type: Label,
    pub hmm_state: Label,
    /// Segments with `nseg_bin <= N_seg < 2 * nseg_bin`.
    pub nseg_bin: usize,
    pub mean_patch_count: f64,
    pub mean_tx_count: f64,
    pub n_segments: usize,
}

/// Average HMM content per segment type, HMM state and `N_seg` bin.
pub fn cross_tabulate(
    hmm_patches: &[Patch],
    segments: &[SegmentPatch],
    assignment: Assignment,
) -> Result<Vec<CrossTabRow>> {
    let comps = segment_composition(hmm_patches, segments, assignment)?;
    let mut groups: BTreeMap<(Label, usize), (usize, [usize; 3], [usize; 3])> = BTreeMap::new();
    for c in &comps {
        let g = groups
            .entry((c.segment.segment_type, nseg_bin(c.segment.n_seg())))
            .or_default();
        g.0 += 1;
        for s in 0..3 {
            g.1[s] += c.patch_counts[s];
            g.2[s] += c.tx_counts[s];
        }
    }
    let mut rows = Vec::new();
    for ((segment_type, bin), (n, patches, txs)) in groups {
        for state in Label::ALL {
            rows.push(CrossTabRow {
                segment_type,
                hmm_state: state,
                nseg_bin: bin,
                mean_patch_count: patches[slot(state)] as f64 / n as f64,
                mean_tx_count: txs[slot(state)] as f64 / n as f64,
                n_segments: n,
            });
        }
    }
    Ok(rows)
}

pub fn write_cross_tab_csv<W: Write>(writer: W, rows: &[CrossTabRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record([
            "segment_type",
            "hmm_state",
            "nseg_bin",
            "mean_patch_count",
            "mean_tx_count",
            "n_segments",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(member: &str, label: Label, first: usize, last: usize) -> Patch {
        Patch {
            member_id: member.into(),
            label,
            state: slot(label),
            first_index: first,
            last_index: last,
            t_first: first as f64,
            t_last: last as f64,
            duration_seconds: (last - first) as f64,
            n_buy: last - first + 1,
            n_sell: 0,
            n_tot: last - first + 1,
            v_buy: 1.0,
            v_sell: 0.0,
            v_tot: 1.0,
            buy_volume_ratio: 1.0,
            market_order_count: 0,
            classified_count: 0,
            market_order_fraction: None,
            market_volume: 1.0,
            participation_rate: 1.0,
        }
    }

    fn seg(member: &str, t: Label, first: usize, last: usize) -> SegmentPatch {
        SegmentPatch {
            member_id: member.into(),
            segment_type: t,
            first_index: first,
            last_index: last,
        }
    }

    #[test]
    fn identity_partition() {
        let patches = vec![
            patch("a", Label::Buy, 0, 4),
            patch("a", Label::Neutral, 5, 6),
            patch("a", Label::Sell, 7, 20),
        ];
        let segs: Vec<SegmentPatch> = patches
            .iter()
            .map(|p| seg("a", p.label, p.first_index, p.last_index))
            .collect();
        for c in segment_composition(&patches, &segs, Assignment::Midpoint).unwrap() {
            let own = slot(c.segment.segment_type);
            for s in 0..3 {
                assert_eq!(c.patch_counts[s], usize::from(s == own));
                assert_eq!(c.tx_counts[s], if s == own { c.segment.n_seg() } else { 0 });
            }
        }
    }

    #[test]
    fn two_patches_in_one_segment() {
        let patches = vec![patch("a", Label::Buy, 0, 9), patch("a", Label::Neutral, 10, 14)];
        let segs = vec![seg("a", Label::Buy, 0, 14)];
        let c = &segment_composition(&patches, &segs, Assignment::Midpoint).unwrap()[0];
        assert_eq!(c.patch_counts, [1, 1, 0]);
        assert_eq!(c.tx_counts, [10, 5, 0]);
    }

    #[test]
    fn straddling_patch_follows_assignment() {
        let patches = vec![patch("a", Label::Buy, 0, 9), patch("a", Label::Sell, 10, 19)];
        let segs = vec![seg("a", Label::Buy, 0, 11), seg("a", Label::Sell, 12, 19)];
        let mid = segment_composition(&patches, &segs, Assignment::Midpoint).unwrap();
        assert_eq!(mid[0].patch_counts, [1, 0, 0]);
        assert_eq!(mid[1].patch_counts, [0, 0, 1]);
        let first = segment_composition(&patches, &segs, Assignment::FirstIndex).unwrap();
        assert_eq!(first[0].patch_counts, [1, 0, 1]);
        assert_eq!(first[1].patch_counts, [0, 0, 0]);
        assert_eq!(mid[0].tx_counts, [10, 0, 2]);
    }

    #[test]
    fn mismatched_index_space() {
        let patches = vec![patch("a", Label::Buy, 0, 9)];
        assert!(segment_composition(&patches, &[seg("a", Label::Buy, 5, 12)], Assignment::Midpoint).is_err());
        assert!(segment_composition(&patches, &[seg("b", Label::Buy, 0, 3)], Assignment::Midpoint).is_err());
        let overlapping = [seg("a", Label::Buy, 0, 5), seg("a", Label::Sell, 5, 9)];
        assert!(segment_composition(&patches, &overlapping, Assignment::Midpoint).is_err());
    }

    #[test]
    fn bins_are_powers_of_two() {
        assert_eq!(nseg_bin(1), 1);
        assert_eq!(nseg_bin(3), 2);
        assert_eq!(nseg_bin(4), 4);
        assert_eq!(nseg_bin(1000), 512);
    }

    #[test]
    fn table_ignores_member_order() {
        let patches = vec![
            patch("a", Label::Buy, 0, 9),
            patch("b", Label::Sell, 0, 3),
            patch("b", Label::Neutral, 4, 9),
        ];
        let segs = vec![seg("a", Label::Buy, 0, 9), seg("b", Label::Sell, 0, 9)];
        let t1 = cross_tabulate(&patches, &segs, Assignment::Midpoint).unwrap();
        let mut rp = patches.clone();
        rp.reverse();
        let mut rs = segs.clone();
        rs.reverse();
        assert_eq!(t1, cross_tabulate(&rp, &rs, Assignment::Midpoint).unwrap());
        assert_eq!(t1.len(), 6);
    }

    #[test]
    fn segment_csv_round_trip() {
        let segs = vec![seg("a", Label::Buy, 0, 9), seg("a", Label::Neutral, 10, 12)];
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &segs).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("member_id,type,first_index,last_index"));
        assert_eq!(read_segments_csv(buf.as_slice()).unwrap(), segs);
    }
}
