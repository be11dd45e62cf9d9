//! Symmetric positive semidefinite banded systems.

#![allow(clippy::needless_range_loop)]

/// Lower band of a symmetric `n × n` matrix with half-bandwidth `bw`.
/// Entry `(i, j)` with `i - bw <= j <= i` lives at `data[i * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Sets `(i, j)` and, implicitly, `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "({i}, {j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.data[k] += v;
        }
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Cholesky factor of a semidefinite band matrix.
///
/// A pivot that falls to `rel_tol` times its original diagonal (or below) marks
/// a column linearly dependent on earlier ones; that variable is pinned to zero,
/// which leaves the range of the system unchanged.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: SymBandMatrix,
    dropped: Vec<bool>,
}

impl BandCholesky {
    pub fn factor(a: &SymBandMatrix, rel_tol: f64) -> Self {
        let n = a.n;
        let bw = a.bw;
        let mut l = a.clone();
        let mut dropped = vec![false; n];
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = a.data[a.idx(j, j)];
            let orig = d;
            for k in lo..j {
                let v = l.data[l.idx(j, k)];
                d -= v * v;
            }
            let hi = (j + bw).min(n - 1);
            if d.is_nan() || d <= rel_tol * orig || orig <= 0.0 {
                dropped[j] = true;
                let k = l.idx(j, j);
                l.data[k] = 0.0;
                for i in j + 1..=hi {
                    let k = l.idx(i, j);
                    l.data[k] = 0.0;
                }
                continue;
            }
            let piv = d.sqrt();
            let k = l.idx(j, j);
            l.data[k] = piv;
            for i in j + 1..=hi {
                let lo_i = i.saturating_sub(bw);
                let mut s = l.data[l.idx(i, j)];
                for k in lo_i..j {
                    s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                let k = l.idx(i, j);
                l.data[k] = s / piv;
            }
        }
        Self { factor: l, dropped }
    }

    pub fn dropped(&self) -> &[bool] {
        &self.dropped
    }

    /// Solves `A x = b` restricted to the retained variables.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.n;
        let bw = l.bw;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            if self.dropped[i] {
                continue;
            }
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            if self.dropped[i] {
                continue;
            }
            let mut s = y[i];
            for k in i + 1..=(i + bw).min(n - 1) {
                s -= l.data[l.idx(k, i)] * x[k];
            }
            x[i] = s / l.data[l.idx(i, i)];
        }
        x
    }
}
