use std::collections::VecDeque;

/// Regular node grid over [−1, 1]^d with `2·res + 1` nodes per axis.
#[derive(Clone, Debug)]
pub(crate) struct Grid {
    pub res: usize,
    pub dims: usize,
}

impl Grid {
    pub fn new(res: usize, dims: usize) -> Self {
        Grid { res, dims }
    }

    pub fn side(&self) -> usize {
        2 * self.res + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dims as u32)
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.res as f64 - 1.0
    }

    /// Normalized coordinates of a flat node index, first axis fastest.
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let side = self.side();
        (0..self.dims)
            .map(|_| {
                let c = self.coord(idx % side);
                idx /= side;
                c
            })
            .collect()
    }

    pub fn center(&self) -> usize {
        let side = self.side();
        (0..self.dims).fold((0, 1), |(acc, stride), _| (acc + self.res * stride, stride * side)).0
    }

    /// Nodes reachable from `start` through axis-neighbour members.
    pub fn flood_fill(&self, member: &[bool], start: usize) -> Vec<bool> {
        let side = self.side();
        let mut seen = vec![false; member.len()];
        if !member[start] {
            return seen;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let mut stride = 1;
            for _ in 0..self.dims {
                let c = (i / stride) % side;
                if c > 0 && member[i - stride] && !seen[i - stride] {
                    seen[i - stride] = true;
                    queue.push_back(i - stride);
                }
                if c + 1 < side && member[i + stride] && !seen[i + stride] {
                    seen[i + stride] = true;
                    queue.push_back(i + stride);
                }
                stride *= side;
            }
        }
        seen
    }
}
