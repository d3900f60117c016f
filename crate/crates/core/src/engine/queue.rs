use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy)]
struct Entry<T> {
    time: f64,
    payload: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.time.total_cmp(&other.time) == Ordering::Equal
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // Reversed: BinaryHeap is a max-heap and we want the earliest time on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time)
    }
}

/// Pending deaths keyed by absolute time, earliest first.
#[derive(Debug, Clone)]
pub(crate) struct DeathQueue<T> {
    heap: BinaryHeap<Entry<T>>,
}

impl<T: Copy> DeathQueue<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            heap: BinaryHeap::with_capacity(n),
        }
    }

    #[inline]
    pub fn push(&mut self, time: f64, payload: T) {
        self.heap.push(Entry { time, payload });
    }

    #[inline]
    pub fn next_time(&self) -> f64 {
        self.heap.peek().map_or(f64::INFINITY, |e| e.time)
    }

    #[inline]
    pub fn pop(&mut self) -> Option<(f64, T)> {
        self.heap.pop().map(|e| (e.time, e.payload))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_order() {
        let mut q = DeathQueue::with_capacity(4);
        for (t, id) in [(3.0, 0u32), (0.5, 1), (2.0, 2), (0.25, 3)] {
            q.push(t, id);
        }
        assert_eq!(q.next_time(), 0.25);
        let order: Vec<u32> = std::iter::from_fn(|| q.pop().map(|(_, id)| id)).collect();
        assert_eq!(order, vec![3, 1, 2, 0]);
        assert_eq!(q.next_time(), f64::INFINITY);
        assert_eq!(q.len(), 0);
    }
}
