use std::collections::BTreeMap;
use std::ops::Range;

/// Set of disjoint, non-adjacent half-open `u64` ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end
    map: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len_ranges(&self) -> usize {
        self.map.len()
    }

    /// Insert a range; returns how many previously-absent values it added.
    pub fn insert(&mut self, range: Range<u64>) -> u64 {
        if range.start >= range.end {
            return 0;
        }
        let mut start = range.start;
        let mut end = range.end;
        let before = self.covered_within(start..end);
        // merge with a predecessor that touches or overlaps
        if let Some((&s, &e)) = self.map.range(..=start).next_back() {
            if e >= start {
                start = s;
                end = end.max(e);
            }
        }
        let overlapping: Vec<u64> = self.map.range(start..=end).map(|(&s, _)| s).collect();
        for s in overlapping {
            let e = self.map.remove(&s).unwrap();
            end = end.max(e);
        }
        self.map.insert(start, end);
        (range.end - range.start) - before
    }

    pub fn contains(&self, value: u64) -> bool {
        self.map.range(..=value).next_back().is_some_and(|(_, &e)| value < e)
    }

    pub fn contains_range(&self, range: Range<u64>) -> bool {
        range.start >= range.end
            || self
                .map
                .range(..=range.start)
                .next_back()
                .is_some_and(|(_, &e)| range.end <= e)
    }

    /// Number of values of `range` already in the set.
    pub fn covered_within(&self, range: Range<u64>) -> u64 {
        let mut covered = 0;
        let first = self
            .map
            .range(..range.start)
            .next_back()
            .map(|(&s, _)| s)
            .unwrap_or(range.start);
        for (&s, &e) in self.map.range(first..range.end) {
            let lo = s.max(range.start);
            let hi = e.min(range.end);
            if hi > lo {
                covered += hi - lo;
            }
        }
        covered
    }

    /// Sub-ranges of `range` not in the set.
    pub fn gaps_within(&self, range: Range<u64>) -> Vec<Range<u64>> {
        let mut gaps = Vec::new();
        let mut cursor = range.start;
        let first = self
            .map
            .range(..range.start)
            .next_back()
            .map(|(&s, _)| s)
            .unwrap_or(range.start);
        for (&s, &e) in self.map.range(first..range.end) {
            if e <= cursor {
                continue;
            }
            if s > cursor {
                gaps.push(cursor..s.min(range.end));
            }
            cursor = cursor.max(e);
            if cursor >= range.end {
                break;
            }
        }
        if cursor < range.end {
            gaps.push(cursor..range.end);
        }
        gaps
    }

    /// End of the range starting at zero, or zero.
    pub fn prefix_end(&self) -> u64 {
        match self.map.first_key_value() {
            Some((&0, &e)) => e,
            _ => 0,
        }
    }

    /// Ranges from highest to lowest.
    pub fn iter_rev(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.map.iter().rev().map(|(&s, &e)| s..e)
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.map.iter().map(|(&s, &e)| s..e)
    }

    pub fn max_value(&self) -> Option<u64> {
        self.map.last_key_value().map(|(_, &e)| e - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn merges_adjacent_and_overlapping() {
        let mut set = RangeSet::new();
        assert_eq!(set.insert(0..10), 10);
        assert_eq!(set.insert(20..30), 10);
        assert_eq!(set.insert(10..20), 10);
        assert_eq!(set.len_ranges(), 1);
        assert_eq!(set.insert(5..35), 5);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![0..35]);
        assert_eq!(set.prefix_end(), 35);
    }

    #[test]
    fn gaps_and_coverage() {
        let mut set = RangeSet::new();
        set.insert(10..20);
        set.insert(30..40);
        assert_eq!(set.gaps_within(0..50), vec![0..10, 20..30, 40..50]);
        assert_eq!(set.gaps_within(12..18), vec![]);
        assert_eq!(set.gaps_within(15..35), vec![20..30]);
        assert_eq!(set.covered_within(15..35), 10);
        assert!(set.contains(10) && !set.contains(20));
        assert!(set.contains_range(31..40) && !set.contains_range(19..21));
        assert_eq!(set.prefix_end(), 0);
        assert_eq!(set.max_value(), Some(39));
    }

    proptest! {
        #[test]
        fn behaves_like_a_bitmap(ranges in prop::collection::vec((0u64..200, 0u64..20), 0..30)) {
            let mut set = RangeSet::new();
            let mut bits = [false; 220];
            for (start, len) in ranges {
                let added = set.insert(start..start + len);
                let mut expect = 0;
                for b in &mut bits[start as usize..(start + len) as usize] {
                    if !*b { expect += 1; }
                    *b = true;
                }
                prop_assert_eq!(added, expect);
            }
            for (i, &b) in bits.iter().enumerate() {
                prop_assert_eq!(set.contains(i as u64), b);
            }
            let gap_total: u64 = set.gaps_within(0..220).iter().map(|r| r.end - r.start).sum();
            prop_assert_eq!(gap_total, bits.iter().filter(|b| !**b).count() as u64);
            let v: Vec<_> = set.iter().collect();
            prop_assert!(v.windows(2).all(|w| w[0].end < w[1].start));
        }
    }
}
