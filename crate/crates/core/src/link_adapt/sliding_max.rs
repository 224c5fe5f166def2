use std::collections::VecDeque;

/// Maximum over the last `window` pushed values.
///
/// Monotonic deque of `(seq, value)` with values strictly decreasing from
/// front to back; the front is the window maximum. Push is O(1) amortized.
#[derive(Debug, Clone)]
pub struct SlidingMax {
    window: u64,
    next_seq: u64,
    q: VecDeque<(u64, i32)>,
}

impl SlidingMax {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must hold at least one sample");
        Self {
            window: window as u64,
            next_seq: 0,
            q: VecDeque::new(),
        }
    }

    pub fn push(&mut self, value: i32) {
        while matches!(self.q.back(), Some(&(_, v)) if v <= value) {
            self.q.pop_back();
        }
        self.q.push_back((self.next_seq, value));
        self.next_seq += 1;
        let oldest = self.next_seq.saturating_sub(self.window);
        while matches!(self.q.front(), Some(&(s, _)) if s < oldest) {
            self.q.pop_front();
        }
    }

    pub fn max(&self) -> Option<i32> {
        self.q.front().map(|&(_, v)| v)
    }

    pub fn pushed(&self) -> u64 {
        self.next_seq
    }

    pub fn window(&self) -> usize {
        self.window as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_has_no_max() {
        assert_eq!(SlidingMax::new(3).max(), None);
    }

    #[test]
    fn evicts_old_maximum() {
        let mut s = SlidingMax::new(3);
        for v in [5, 1, 2] {
            s.push(v);
        }
        assert_eq!(s.max(), Some(5));
        s.push(0);
        assert_eq!(s.max(), Some(2));
        s.push(-1);
        s.push(-2);
        assert_eq!(s.max(), Some(0));
    }

    #[test]
    fn window_of_one_tracks_last() {
        let mut s = SlidingMax::new(1);
        for v in [3, 9, -4, 7] {
            s.push(v);
            assert_eq!(s.max(), Some(v));
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(values in proptest::collection::vec(-15i32..=15, 1..300), w in 1usize..40) {
            let mut s = SlidingMax::new(w);
            for (i, &v) in values.iter().enumerate() {
                s.push(v);
                let lo = (i + 1).saturating_sub(w);
                let brute = values[lo..=i].iter().copied().max();
                prop_assert_eq!(s.max(), brute);
            }
        }
    }
}
