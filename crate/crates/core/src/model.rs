//! Sparse MILP container (always a maximization).

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    /// `(column, coefficient)`, sorted by column.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Signed slack: nonnegative iff the row is satisfied (for `Eq`, the
    /// negated absolute violation).
    pub fn slack(&self, values: &[f64]) -> f64 {
        let act = self.activity(values);
        match self.relation {
            Relation::Le => self.rhs - act,
            Relation::Ge => act - self.rhs,
            Relation::Eq => -(act - self.rhs).abs(),
        }
    }
}

/// Column positions of the structured ISAC encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub n_antennas: usize,
    pub n_phases: usize,
    pub n_users: usize,
    pub uniform_alphabet: bool,
}

impl Layout {
    pub fn n_pairs(&self) -> usize {
        self.n_antennas * self.n_antennas.saturating_sub(1) / 2
    }

    pub fn x(&self, n: usize, l: usize) -> usize {
        n * self.n_phases + l
    }

    /// Index of the pair `(n, m)`, `n < m`, in row-major upper-triangle order.
    pub fn pair(&self, n: usize, m: usize) -> usize {
        debug_assert!(n < m && m < self.n_antennas);
        n * self.n_antennas - n * (n + 1) / 2 + (m - n - 1)
    }

    pub fn y_start(&self) -> usize {
        self.n_antennas * self.n_phases
    }

    /// Column of `[Y_{n,m}]_{r,c}`; rows follow `x_n`, columns follow `x_m`.
    pub fn y(&self, n: usize, m: usize, r: usize, c: usize) -> usize {
        let l = self.n_phases;
        self.y_start() + self.pair(n, m) * l * l + r * l + c
    }

    pub fn mu(&self, u: usize) -> usize {
        self.y_start() + self.n_pairs() * self.n_phases * self.n_phases + u
    }

    pub fn tau(&self) -> usize {
        self.mu(self.n_users)
    }

    pub fn n_columns(&self) -> usize {
        self.tau() + 1
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_antennas;
        (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Maximized.
    pub objective: Vec<f64>,
    pub layout: Option<Layout>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            layout: None,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool, obj: f64) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer,
        });
        self.objective.push(obj);
        self.vars.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, mut coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        coeffs.sort_by_key(|&(j, _)| j);
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.lower).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.upper).collect()
    }

    /// Largest row violation and bound violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .rows
            .iter()
            .map(|r| (-r.slack(values)).max(0.0))
            .fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}
