//! Small dense complex helpers shared by the channel and instance layers.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense square complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// `scale * v v^H`.
    pub fn outer(v: &[C64], scale: f64) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = v[i] * v[j].conj() * scale;
            }
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks(self.dim.max(1))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    /// Largest elementwise deviation from Hermitian symmetry.
    pub fn hermitian_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `w^H M w`, returned as a complex number so callers can inspect the
    /// imaginary residue.
    pub fn quad_form(&self, w: &[C64]) -> C64 {
        debug_assert_eq!(w.len(), self.dim);
        let mut acc = C64::new(0.0, 0.0);
        for (i, row) in self.rows().enumerate() {
            let mut inner = C64::new(0.0, 0.0);
            for (m, x) in row.iter().zip(w) {
                inner += m * x;
            }
            acc += w[i].conj() * inner;
        }
        acc
    }

    /// Recovers `v` with `M = v v^H` when `M` is rank one PSD.
    ///
    /// Uses the column with the largest diagonal entry; exact for rank-one
    /// inputs up to a global phase.
    pub fn rank_one_factor(&self) -> Option<Vec<C64>> {
        let (k, pivot) = (0..self.dim)
            .map(|i| (i, self[(i, i)].re))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if !(pivot > 0.0) {
            return Some(vec![C64::new(0.0, 0.0); self.dim]);
        }
        let scale = pivot.sqrt().recip();
        Some((0..self.dim).map(|i| self[(i, k)] * scale).collect())
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
