//! Equality and order constraints on stacked correlations.
//!
//! A hypothesis is written `R_E rho = r_E, R_I rho > r_I`. Every row either
//! compares two correlations (`+1`/`-1` entries, constant 0) or bounds a single
//! correlation by a constant in `(-1, 1)`.
//!
//! Constraint lines use the six-number coding `j1 p1 p2 j2 p3 p4` for
//! `rho_{j1,p1p2} (=|>) rho_{j2,p3p4}`, and `j1 p1 p2 0 s d` for a constant
//! bound, where `s = 1` reads `rho = d` / `rho > d` and `s = -1` reads `rho < d`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::bayes_factor::fisher;
use crate::error::{Error, Result};
use crate::model::RhoLayout;

const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// A correlation `rho_{population, first second}` with `first > second`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CorrelationRef {
    pub population: usize,
    pub first: usize,
    pub second: usize,
}

impl CorrelationRef {
    pub fn new(layout: &RhoLayout, population: usize, p1: usize, p2: usize) -> Result<Self> {
        layout.index(population, p1, p2)?;
        let (first, second) = if p1 > p2 { (p1, p2) } else { (p2, p1) };
        Ok(CorrelationRef {
            population,
            first,
            second,
        })
    }

    pub fn index(&self, layout: &RhoLayout) -> usize {
        layout
            .index(self.population, self.first, self.second)
            .expect("validated at construction")
    }
}

impl fmt::Display for CorrelationRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rho[{}]({},{})", self.population, self.first, self.second)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RightSide {
    Correlation(CorrelationRef),
    /// `sign` is `+1` for `= d` / `> d` and `-1` for `< d`.
    Constant { sign: i8, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintRow {
    pub kind: ConstraintKind,
    pub left: CorrelationRef,
    pub right: RightSide,
}

impl ConstraintRow {
    /// The six-number input coding of this row.
    pub fn to_line(&self) -> String {
        let l = self.left;
        match self.right {
            RightSide::Correlation(r) => format!(
                "{} {} {} {} {} {}",
                l.population, l.first, l.second, r.population, r.first, r.second
            ),
            RightSide::Constant { sign, value } => format!(
                "{} {} {} 0 {} {}",
                l.population, l.first, l.second, sign, value
            ),
        }
    }
}

fn parse_index(token: &str, what: &str) -> Result<usize> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::InvalidConstraint(format!("{what} '{token}' is not a number")))?;
    if v.fract() != 0.0 || v < 0.0 {
        return Err(Error::InvalidConstraint(format!(
            "{what} '{token}' is not a non-negative integer"
        )));
    }
    Ok(v as usize)
}

/// Parses one constraint line given as six tokens.
pub fn parse_constraint_line(
    tokens: &[&str],
    kind: ConstraintKind,
    layout: &RhoLayout,
) -> Result<ConstraintRow> {
    if tokens.len() != 6 {
        return Err(Error::InvalidConstraint(format!(
            "expected 6 numbers, found {}",
            tokens.len()
        )));
    }
    let g1 = parse_index(tokens[0], "population")?;
    let p1 = parse_index(tokens[1], "variable")?;
    let p2 = parse_index(tokens[2], "variable")?;
    let left = CorrelationRef::new(layout, g1, p1, p2)?;
    let g2 = parse_index(tokens[3], "population")?;
    let right = if g2 == 0 {
        let sign: f64 = tokens[4]
            .parse()
            .map_err(|_| Error::InvalidConstraint(format!("sign '{}' is not a number", tokens[4])))?;
        let sign = if sign == 1.0 {
            1i8
        } else if sign == -1.0 {
            -1i8
        } else {
            return Err(Error::InvalidConstraint(format!(
                "sign must be 1 or -1, found '{}'",
                tokens[4]
            )));
        };
        if kind == ConstraintKind::Equality && sign != 1 {
            return Err(Error::InvalidConstraint(
                "equality constraints with a constant take sign 1".into(),
            ));
        }
        let value: f64 = tokens[5].parse().map_err(|_| {
            Error::InvalidConstraint(format!("constant '{}' is not a number", tokens[5]))
        })?;
        if !(value.abs() < 1.0) {
            return Err(Error::CorrelationOutOfRange(value));
        }
        RightSide::Constant { sign, value }
    } else {
        let p3 = parse_index(tokens[4], "variable")?;
        let p4 = parse_index(tokens[5], "variable")?;
        RightSide::Correlation(CorrelationRef::new(layout, g2, p3, p4)?)
    };
    if right == RightSide::Correlation(left) {
        return Err(Error::InvalidConstraint(format!(
            "{left} is compared with itself"
        )));
    }
    Ok(ConstraintRow { kind, left, right })
}

/// Whether constants refer to correlations or to their Fisher transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Correlation,
    Fisher,
}

/// A compiled hypothesis `R_E x = r_E, R_I x > r_I` over the stacked vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    label: String,
    layout: RhoLayout,
    rows: Vec<ConstraintRow>,
    scale: Scale,
    eq_matrix: DMatrix<f64>,
    eq_constants: DVector<f64>,
    ineq_matrix: DMatrix<f64>,
    ineq_constants: DVector<f64>,
}

fn row_coefficients(row: &ConstraintRow, layout: &RhoLayout, scale: Scale) -> (Vec<(usize, f64)>, f64) {
    let li = row.left.index(layout);
    match row.right {
        RightSide::Correlation(r) => (vec![(li, 1.0), (r.index(layout), -1.0)], 0.0),
        RightSide::Constant { sign, value } => {
            let value = match scale {
                Scale::Correlation => value,
                Scale::Fisher => fisher(value).expect("constant validated inside (-1, 1)"),
            };
            let s = f64::from(sign);
            (vec![(li, s)], s * value)
        }
    }
}

fn build_block(
    rows: &[&ConstraintRow],
    layout: &RhoLayout,
    scale: Scale,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut m = DMatrix::zeros(rows.len(), layout.len());
    let mut r = DVector::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let (coefs, constant) = row_coefficients(row, layout, scale);
        for (j, v) in coefs {
            m[(i, j)] = v;
        }
        r[i] = constant;
    }
    (m, r)
}

/// Index of the first row that is a linear combination of earlier rows, if any.
fn first_dependent_row(m: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<(usize, DVector<f64>)> = Vec::new();
    for i in 0..m.nrows() {
        let mut v: DVector<f64> = m.row(i).transpose();
        for (pivot, b) in &basis {
            let f = v[*pivot] / b[*pivot];
            if f != 0.0 {
                v.axpy(-f, b, 1.0);
            }
        }
        match v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
            Some((j, x)) if x.abs() > RANK_TOLERANCE => basis.push((j, v)),
            _ => return Some(i),
        }
    }
    None
}

impl Hypothesis {
    pub fn compile(label: impl Into<String>, rows: Vec<ConstraintRow>, layout: RhoLayout) -> Result<Self> {
        let label = label.into();
        let mut ordered: Vec<ConstraintRow> = rows
            .iter()
            .filter(|r| r.kind == ConstraintKind::Equality)
            .copied()
            .collect();
        ordered.extend(rows.iter().filter(|r| r.kind == ConstraintKind::Inequality).copied());
        let h = Self::from_rows(label, ordered, layout, Scale::Correlation);
        if let Some(i) = first_dependent_row(&h.eq_matrix) {
            return Err(Error::RankDeficient {
                label: h.label,
                row: i + 1,
            });
        }
        let q_i = h.ineq_matrix.nrows();
        for i in 0..q_i {
            for j in 0..i {
                if h.ineq_matrix.row(i) == h.ineq_matrix.row(j)
                    && h.ineq_constants[i] == h.ineq_constants[j]
                {
                    return Err(Error::InvalidConstraint(format!(
                        "{}: inequality {} duplicates inequality {}",
                        h.label,
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(h)
    }

    fn from_rows(label: String, rows: Vec<ConstraintRow>, layout: RhoLayout, scale: Scale) -> Self {
        let eq: Vec<&ConstraintRow> = rows.iter().filter(|r| r.kind == ConstraintKind::Equality).collect();
        let ineq: Vec<&ConstraintRow> = rows.iter().filter(|r| r.kind == ConstraintKind::Inequality).collect();
        let (eq_matrix, eq_constants) = build_block(&eq, &layout, scale);
        let (ineq_matrix, ineq_constants) = build_block(&ineq, &layout, scale);
        Hypothesis {
            label,
            layout,
            rows,
            scale,
            eq_matrix,
            eq_constants,
            ineq_matrix,
            ineq_constants,
        }
    }

    /// The same constraints with constants mapped through `atanh`.
    ///
    /// Rows comparing two correlations keep their zero constant: `atanh` is
    /// strictly increasing, so orderings and equalities carry over unchanged.
    pub fn fisher_transform_constants(&self) -> Hypothesis {
        Self::from_rows(self.label.clone(), self.rows.clone(), self.layout, Scale::Fisher)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn layout(&self) -> RhoLayout {
        self.layout
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn equality_count(&self) -> usize {
        self.eq_matrix.nrows()
    }

    pub fn inequality_count(&self) -> usize {
        self.ineq_matrix.nrows()
    }

    pub fn equality_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }

    pub fn equality_constants(&self) -> &DVector<f64> {
        &self.eq_constants
    }

    pub fn inequality_matrix(&self) -> &DMatrix<f64> {
        &self.ineq_matrix
    }

    pub fn inequality_constants(&self) -> &DVector<f64> {
        &self.ineq_constants
    }

    /// Pure order hypotheses carry no equality constraints.
    pub fn is_order_only(&self) -> bool {
        self.equality_count() == 0
    }

    /// Whether `x` satisfies all inequalities strictly (equalities are ignored).
    pub fn satisfies_inequalities(&self, x: &[f64]) -> bool {
        (0..self.inequality_count()).all(|i| {
            let v: f64 = self.ineq_matrix.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            v > self.ineq_constants[i]
        })
    }

    /// Whether `x` satisfies all constraints, equalities to within `tol`.
    pub fn satisfies(&self, x: &[f64], tol: f64) -> bool {
        let eq_ok = (0..self.equality_count()).all(|i| {
            let v: f64 = self.eq_matrix.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            (v - self.eq_constants[i]).abs() <= tol
        });
        eq_ok && self.satisfies_inequalities(x)
    }

    /// Input-file lines for this hypothesis: equalities first, then inequalities.
    pub fn to_constraint_lines(&self) -> Vec<String> {
        self.rows.iter().map(ConstraintRow::to_line).collect()
    }

    /// Completes `R_E` to an invertible transform `T` and re-expresses `R_I`
    /// over the coordinates left free by the equalities.
    pub fn build_transform(&self) -> Result<Transform> {
        Transform::new(self)
    }
}

/// Change of coordinates `xi = T x` whose first `q_E` rows are `R_E`.
///
/// The remaining rows are unit vectors for the coordinates that are not
/// pivots of `R_E`. With `xi = (xi_E, xi_I)`, the inequality block becomes
/// `R_I x = A xi_E + R~_I xi_I`.
#[derive(Clone, Debug)]
pub struct Transform {
    matrix: DMatrix<f64>,
    free: Vec<usize>,
    equality_loading: DMatrix<f64>,
    reduced_inequality: DMatrix<f64>,
}

impl Transform {
    fn new(h: &Hypothesis) -> Result<Self> {
        let l = h.layout.len();
        let q_e = h.equality_count();
        let re = h.equality_matrix();

        // greedy pivots by Gaussian elimination with partial pivoting
        let mut work = re.clone();
        let mut pivots = Vec::with_capacity(q_e);
        let mut row = 0;
        for col in 0..l {
            if row == q_e {
                break;
            }
            let (best, val) = (row..q_e)
                .map(|r| (r, work[(r, col)].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if val <= RANK_TOLERANCE {
                continue;
            }
            work.swap_rows(row, best);
            for r in 0..q_e {
                if r != row {
                    let f = work[(r, col)] / work[(row, col)];
                    if f != 0.0 {
                        for c in 0..l {
                            let v = work[(row, c)];
                            work[(r, c)] -= f * v;
                        }
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        if pivots.len() != q_e {
            return Err(Error::Numerical(format!(
                "{}: equality matrix has rank {} < {q_e}",
                h.label,
                pivots.len()
            )));
        }
        let free: Vec<usize> = (0..l).filter(|c| !pivots.contains(c)).collect();
        let mut matrix = DMatrix::zeros(l, l);
        matrix.rows_mut(0, q_e).copy_from(re);
        for (k, &c) in free.iter().enumerate() {
            matrix[(q_e + k, c)] = 1.0;
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical(format!("{}: transform is singular", h.label)))?;
        let ri_tinv = h.inequality_matrix() * &inverse;
        let equality_loading = ri_tinv.columns(0, q_e).clone_owned();
        let reduced_inequality = ri_tinv.columns(q_e, l - q_e).clone_owned();
        Ok(Transform {
            matrix,
            free,
            equality_loading,
            reduced_inequality,
        })
    }

    /// `T` (`L x L`).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Positions in the stacked vector that make up `xi_I`.
    pub fn free_coordinates(&self) -> &[usize] {
        &self.free
    }

    pub fn equality_count(&self) -> usize {
        self.matrix.nrows() - self.free.len()
    }

    /// `A` in `R_I x = A xi_E + R~_I xi_I`.
    pub fn equality_loading(&self) -> &DMatrix<f64> {
        &self.equality_loading
    }

    /// `R~_I`
    pub fn reduced_inequality(&self) -> &DMatrix<f64> {
        &self.reduced_inequality
    }

    /// Right-hand side of `R~_I xi_I > r_I - A r_E`, i.e. the inequality bounds
    /// once the equality coordinates are pinned at their constants.
    pub fn inequality_offset(&self, h: &Hypothesis) -> DVector<f64> {
        h.inequality_constants() - &self.equality_loading * h.equality_constants()
    }
}

/// The hypotheses under test; the complement ("none of them") is always included.
#[derive(Clone, Debug)]
pub struct HypothesisSet {
    hypotheses: Vec<Hypothesis>,
    include_complement: bool,
}

impl HypothesisSet {
    pub fn new(hypotheses: Vec<Hypothesis>) -> Result<Self> {
        if hypotheses.is_empty() {
            return Err(Error::Config("a hypothesis set needs at least one hypothesis".into()));
        }
        Ok(HypothesisSet {
            hypotheses,
            include_complement: true,
        })
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn include_complement(&self) -> bool {
        self.include_complement
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}
