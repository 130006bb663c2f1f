/// Binary sum tree over a power-of-two number of leaves.
///
/// Node `1` is the root, node `i` has children `2i` and `2i + 1`, leaf `j`
/// lives at `capacity + j`. Sums are kept in `f64` and every update rewrites
/// the whole leaf-to-root path from the children, so internal nodes never
/// drift from the sum of their children.
#[derive(Clone, Debug)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// `capacity` is rounded up to the next power of two.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        SumTree {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        let mut i = self.capacity + leaf;
        self.nodes[i] = value;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Leaf whose cumulative range `[prefix, prefix + value)` contains `mass`.
    /// Masses at or beyond the total land on the last positive leaf.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            if mass < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                mass -= left;
                i = 2 * i + 1;
            }
        }
        let mut leaf = i - self.capacity;
        // rounding can steer the descent onto an empty leaf
        while self.get(leaf) <= 0.0 && leaf > 0 {
            leaf -= 1;
        }
        leaf
    }
}
