// SPDX-License-Identifier: Apache-2.0

//! Binary min-heap of absolute fission times that doubles as the arena of
//! live particles: a uniformly random heap slot is a uniformly random
//! particle, and removing it is a swap-remove followed by one sift.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    /// Absolute time at which the particle reaches the boundary.
    pub fission_time: f64,
    /// Insertion counter; breaks ties between equal fission times.
    pub seq: u64,
}

impl Particle {
    fn precedes(&self, other: &Particle) -> bool {
        match self.fission_time.total_cmp(&other.fission_time) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => self.seq < other.seq,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FissionQueue {
    heap: Vec<Particle>,
    next_seq: u64,
}

impl FissionQueue {
    pub fn with_capacity(capacity: usize) -> Self {
        FissionQueue {
            heap: Vec::with_capacity(capacity),
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn push(&mut self, fission_time: f64) {
        let p = Particle {
            fission_time,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.heap.push(p);
        self.sift_up(self.heap.len() - 1);
    }

    pub fn peek(&self) -> Option<&Particle> {
        self.heap.first()
    }

    pub fn pop(&mut self) -> Option<Particle> {
        if self.heap.is_empty() {
            None
        } else {
            Some(self.remove_at(0))
        }
    }

    /// Removes the particle stored in slot `index`.
    pub fn remove_at(&mut self, index: usize) -> Particle {
        let removed = self.heap.swap_remove(index);
        if index < self.heap.len() {
            if index > 0 && self.heap[index].precedes(&self.heap[(index - 1) / 2]) {
                self.sift_up(index);
            } else {
                self.sift_down(index);
            }
        }
        removed
    }

    /// Live particles in slot order.
    pub fn particles(&self) -> &[Particle] {
        &self.heap
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i].precedes(&self.heap[parent]) {
                self.heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && self.heap[right].precedes(&self.heap[left]) {
                right
            } else {
                left
            };
            if self.heap[child].precedes(&self.heap[i]) {
                self.heap.swap(i, child);
                i = child;
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pops_in_order_after_arbitrary_removals(
            times in proptest::collection::vec(0.0f64..10.0, 1..200),
            removals in proptest::collection::vec(any::<proptest::sample::Index>(), 0..50),
        ) {
            let mut q = FissionQueue::default();
            for &t in &times {
                q.push(t);
            }
            let mut kept: Vec<(f64, u64)> =
                times.iter().enumerate().map(|(i, &t)| (t, i as u64)).collect();
            for idx in removals {
                if q.is_empty() {
                    break;
                }
                let p = q.remove_at(idx.index(q.len()));
                kept.retain(|&(t, s)| !(t == p.fission_time && s == p.seq));
            }
            kept.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let popped: Vec<(f64, u64)> =
                std::iter::from_fn(|| q.pop()).map(|p| (p.fission_time, p.seq)).collect();
            prop_assert_eq!(popped, kept);
        }
    }

    #[test]
    fn ties_resolve_in_insertion_order() {
        let mut q = FissionQueue::default();
        q.push(1.0);
        q.push(1.0);
        q.push(0.5);
        assert_eq!(q.pop().unwrap().seq, 2);
        assert_eq!(q.pop().unwrap().seq, 0);
        assert_eq!(q.pop().unwrap().seq, 1);
        assert!(q.pop().is_none());
    }
}
