//! Finite-dimensional eigenspace machinery: generalized eigenspaces of
//! pencils `Ax = λBx`, their linear independence, the projection lattice with
//! the normalized-trace identity `τ(p∨q) + τ(p∧q) = τ(p) + τ(q)`, and a
//! smallest-singular-value diagnostic for DT samples.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ensembles::{map_replicates, sample_dt, EnsembleSpec};
use crate::error::{arg, Error, Result};

type CMatrix = DMatrix<Complex64>;

/// Relative cut-off for numerical rank in the projection lattice.
pub const LATTICE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Pencil {
    a: CMatrix,
    b: CMatrix,
}

impl Pencil {
    pub fn new(a: CMatrix, b: CMatrix) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() {
            return arg(format!("pencil needs two square matrices of equal size, got {:?} and {:?}", a.shape(), b.shape()));
        }
        Ok(Pencil { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    /// `(UA, UB)`.
    pub fn left_mul(&self, u: &CMatrix) -> Result<Self> {
        Pencil::new(u * &self.a, u * &self.b)
    }
}

#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    ambient: usize,
    /// `ambient × dim`, orthonormal columns.
    columns: CMatrix,
}

impl SubspaceBasis {
    pub fn empty(ambient: usize) -> Self {
        SubspaceBasis { ambient, columns: CMatrix::zeros(ambient, 0) }
    }

    /// Accepts columns that are orthonormal within `1e-10`.
    pub fn from_orthonormal(columns: CMatrix) -> Result<Self> {
        let g = columns.adjoint() * &columns;
        let dev = (g - CMatrix::identity(columns.ncols(), columns.ncols())).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-10 {
            return arg(format!("columns are not orthonormal (deviation {dev:.2e})"));
        }
        Ok(SubspaceBasis { ambient: columns.nrows(), columns })
    }

    /// Orthonormal basis of the column span of `vectors`.
    pub fn span(vectors: &CMatrix) -> Self {
        let ambient = vectors.nrows();
        if vectors.ncols() == 0 {
            return Self::empty(ambient);
        }
        let svd = vectors.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let u = svd.u.expect("requested u");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| smax > 0.0 && svd.singular_values[i] > LATTICE_TOL * smax.max(1.0))
            .collect();
        SubspaceBasis { ambient, columns: u.select_columns(&keep) }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    /// Orthogonal projection `QQ*`.
    pub fn projection(&self) -> CMatrix {
        &self.columns * self.columns.adjoint()
    }

    /// Normalized trace of the projection, computed from the matrix.
    pub fn tau(&self) -> f64 {
        self.projection().trace().re / self.ambient as f64
    }
}

/// Right singular vectors of `m` whose singular value is at most `thr`.
fn null_space(m: &CMatrix, thr: f64) -> CMatrix {
    let (rows, cols) = m.shape();
    let m = if rows < cols {
        let mut padded = CMatrix::zeros(cols, cols);
        padded.rows_mut(0, rows).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= thr).collect();
    v_t.select_rows(&keep).adjoint()
}

fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Orthonormal basis of the numerical null space of `A − λB`: singular values
/// below `tol·(‖A‖ + |λ|‖B‖)`.
pub fn generalized_eigenspace(p: &Pencil, lambda: Complex64, tol: f64) -> Result<SubspaceBasis> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return arg("tol must be in (0, 1e-4]");
    }
    let scale = spectral_norm(&p.a) + lambda.norm() * spectral_norm(&p.b);
    let m = &p.a - &p.b * lambda;
    let thr = tol * scale.max(f64::MIN_POSITIVE);
    let cols = null_space(&m, thr);
    Ok(SubspaceBasis { ambient: p.dim(), columns: cols })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub dims: Vec<usize>,
    pub rank: usize,
    pub independent: bool,
}

/// Concatenates the eigenspace bases for distinct `lambdas` and compares the
/// numerical rank with the sum of their dimensions.
pub fn independence_check(p: &Pencil, lambdas: &[Complex64], tol: f64) -> Result<IndependenceReport> {
    for i in 0..lambdas.len() {
        for j in 0..i {
            if lambdas[i] == lambdas[j] {
                return arg(format!("eigenvalue {} is listed twice", lambdas[i]));
            }
        }
    }
    let sv = p.b.clone().svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if !(smax > 0.0) || smin <= tol * smax {
        return Err(Error::Precondition(format!("B has a nontrivial kernel (σ_min/σ_max = {:.2e})", smin / smax.max(f64::MIN_POSITIVE))));
    }
    let spaces = lambdas.iter().map(|&l| generalized_eigenspace(p, l, tol)).collect::<Result<Vec<_>>>()?;
    let dims: Vec<usize> = spaces.iter().map(SubspaceBasis::dim).collect();
    let total: usize = dims.iter().sum();
    let rank = if total == 0 {
        0
    } else {
        let mut all = CMatrix::zeros(p.dim(), total);
        let mut at = 0;
        for s in &spaces {
            all.columns_mut(at, s.dim()).copy_from(&s.columns);
            at += s.dim();
        }
        let sv = all.svd(false, false).singular_values;
        sv.iter().filter(|&&s| s > LATTICE_TOL).count()
    };
    Ok(IndependenceReport { independent: rank == total, dims, rank })
}

/// `(p ∧ q, p ∨ q)`. The meet is the common null space of `I − PP*` and
/// `I − QQ*`; the join is the column span of `[P Q]`.
pub fn projection_meet_join(p: &SubspaceBasis, q: &SubspaceBasis) -> Result<(SubspaceBasis, SubspaceBasis)> {
    if p.ambient != q.ambient {
        return arg(format!("ambient dimensions differ: {} vs {}", p.ambient, q.ambient));
    }
    let n = p.ambient;
    let mut both = CMatrix::zeros(n, p.dim() + q.dim());
    both.columns_mut(0, p.dim()).copy_from(&p.columns);
    both.columns_mut(p.dim(), q.dim()).copy_from(&q.columns);
    let join = SubspaceBasis::span(&both);

    let id = CMatrix::identity(n, n);
    let mut stacked = CMatrix::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&(&id - p.projection()));
    stacked.rows_mut(n, n).copy_from(&(&id - q.projection()));
    let meet = SubspaceBasis { ambient: n, columns: null_space(&stacked, LATTICE_TOL) };
    Ok((meet, join))
}

/// `(τ(p∨q), τ(p) + τ(q) − τ(p∧q))` with traces taken from the projection matrices.
pub fn kaplansky_check(p: &SubspaceBasis, q: &SubspaceBasis) -> Result<(f64, f64)> {
    let (meet, join) = projection_meet_join(p, q)?;
    Ok((join.tau(), p.tau() + q.tau() - meet.tau()))
}

/// `(τ(⋁ p_λ), Σ τ(p_λ))` over the eigenprojections of distinct `lambdas`.
pub fn eigenprojection_additivity(p: &Pencil, lambdas: &[Complex64], tol: f64) -> Result<(f64, f64)> {
    independence_check(p, lambdas, tol)?;
    let spaces = lambdas.iter().map(|&l| generalized_eigenspace(p, l, tol)).collect::<Result<Vec<_>>>()?;
    let mut join = SubspaceBasis::empty(p.dim());
    for s in &spaces {
        join = projection_meet_join(&join, s)?.1;
    }
    Ok((join.tau(), spaces.iter().map(SubspaceBasis::tau).sum()))
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    })
}

/// A pencil `A = B·S·diag·S⁻¹` with random Gaussian `B` and `S`, together
/// with its eigenvalues and their multiplicities.
#[derive(Clone, Debug)]
pub struct ConstructedPencil {
    pub pencil: Pencil,
    pub eigen: Vec<(Complex64, usize)>,
}

pub fn constructed_pencil(dim: usize, rng: &mut impl Rng) -> Result<ConstructedPencil> {
    if dim == 0 {
        return arg("dimension must be positive");
    }
    let k = rng.random_range(1..=dim.min(6));
    let mut mult = vec![1usize; k];
    for _ in k..dim {
        mult[rng.random_range(0..k)] += 1;
    }
    let eigen: Vec<(Complex64, usize)> =
        (0..k).map(|i| (Complex64::new(i as f64 + 1.0, (i % 3) as f64 - 1.0), mult[i])).collect();
    let diag: Vec<Complex64> = eigen.iter().flat_map(|&(l, m)| std::iter::repeat_n(l, m)).collect();
    let s = gaussian_matrix(dim, dim, rng);
    let s_inv = s.clone().try_inverse().ok_or_else(|| Error::Precision("random similarity is singular".into()))?;
    let m = &s * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) * s_inv;
    let b = gaussian_matrix(dim, dim, rng);
    let a = &b * m;
    Ok(ConstructedPencil { pencil: Pencil::new(a, b)?, eigen })
}

/// Two random subspaces of `C^dim` sharing a planted common subspace of random
/// dimension (possibly zero).
pub fn random_projection_pair(dim: usize, rng: &mut impl Rng) -> (SubspaceBasis, SubspaceBasis) {
    let shared = rng.random_range(0..=dim / 4);
    let extra_p = rng.random_range(0..=(dim - shared) / 2);
    let extra_q = rng.random_range(0..=(dim - shared) / 2);
    let common = gaussian_matrix(dim, shared, rng);
    let mut out = Vec::with_capacity(2);
    for extra in [extra_p, extra_q] {
        let mut m = CMatrix::zeros(dim, shared + extra);
        m.columns_mut(0, shared).copy_from(&common);
        m.columns_mut(shared, extra).copy_from(&gaussian_matrix(dim, extra, rng));
        out.push(SubspaceBasis::span(&m));
    }
    let q = out.pop().unwrap();
    (out.pop().unwrap(), q)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularValueStats {
    pub gamma_re: f64,
    pub gamma_im: f64,
    pub n: usize,
    pub reps: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSpectrumReport {
    pub rows: Vec<SingularValueStats>,
    pub note: String,
}

pub const POINT_SPECTRUM_NOTE: &str = "finite matrices always have eigenvalues; Z_n is diagonal plus strictly upper triangular, \
so σ_min(γI − Z_n) = 0 whenever γ is a diagonal entry (for μ = δ_a every n has γ = a in its spectrum); \
the statistic is a trend in n, not a verification";

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Distribution over replicates of `σ_min(γI − Z_n)` for each `γ` and `n`.
pub fn point_spectrum_diagnostic(spec: &EnsembleSpec, gammas: &[Complex64], ns: &[usize], reps: usize) -> Result<PointSpectrumReport> {
    if reps == 0 {
        return arg("reps must be at least 1");
    }
    let ns: Vec<usize> = if ns.is_empty() { vec![spec.n] } else { ns.to_vec() };
    let mut rows = Vec::new();
    for &n in &ns {
        let s = spec.with_n(n);
        let per_rep: Vec<Vec<f64>> = map_replicates(reps, |rep| {
            let z = sample_dt(&s, rep);
            gammas
                .iter()
                .map(|&g| {
                    let m = CMatrix::identity(n, n) * g - &z;
                    m.svd(false, false).singular_values.min()
                })
                .collect()
        });
        for (gi, g) in gammas.iter().enumerate() {
            let mut v: Vec<f64> = per_rep.iter().map(|r| r[gi]).collect();
            v.sort_by(f64::total_cmp);
            rows.push(SingularValueStats {
                gamma_re: g.re,
                gamma_im: g.im,
                n,
                reps,
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            });
        }
    }
    Ok(PointSpectrumReport { rows, note: POINT_SPECTRUM_NOTE.into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::MeasureSpec;
    use crate::rational::frac;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn diag_pencil() -> Pencil {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(2.0), c(3.0)]));
        Pencil::new(a, CMatrix::identity(3, 3)).unwrap()
    }

    #[test]
    fn diagonal_eigenspace() {
        let e = generalized_eigenspace(&diag_pencil(), c(2.0), 1e-10).unwrap();
        assert_eq!(e.dim(), 1);
        assert!((e.columns()[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(generalized_eigenspace(&diag_pencil(), c(2.5), 1e-10).unwrap().dim(), 0);
        assert!(generalized_eigenspace(&diag_pencil(), c(2.0), 1e-3).is_err());
    }

    #[test]
    fn diagonal_independence() {
        let r = independence_check(&diag_pencil(), &[c(1.0), c(2.0), c(3.0)], 1e-10).unwrap();
        assert_eq!(r, IndependenceReport { dims: vec![1, 1, 1], rank: 3, independent: true });
        assert!(matches!(independence_check(&diag_pencil(), &[c(1.0), c(1.0)], 1e-10), Err(Error::Argument(_))));
        let singular = Pencil::new(CMatrix::identity(2, 2), CMatrix::from_diagonal_element(2, 2, c(0.0))).unwrap();
        assert!(matches!(independence_check(&singular, &[c(1.0)], 1e-10), Err(Error::Precondition(_))));
        assert!(Pencil::new(CMatrix::identity(2, 2), CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn constructed_pencils_recover_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let dim = rng.random_range(2..=12);
            let cp = constructed_pencil(dim, &mut rng).unwrap();
            let lambdas: Vec<Complex64> = cp.eigen.iter().map(|e| e.0).collect();
            let r = independence_check(&cp.pencil, &lambdas, 1e-9).unwrap();
            assert_eq!(r.dims, cp.eigen.iter().map(|e| e.1).collect::<Vec<_>>());
            assert!(r.independent);
        }
    }

    #[test]
    fn orthogonal_and_equal_lattice() {
        let e = |i: usize| {
            let mut m = CMatrix::zeros(2, 1);
            m[(i, 0)] = c(1.0);
            SubspaceBasis::from_orthonormal(m).unwrap()
        };
        let (meet, join) = projection_meet_join(&e(0), &e(1)).unwrap();
        assert_eq!((meet.dim(), join.dim()), (0, 2));
        let (lhs, rhs) = kaplansky_check(&e(0), &e(1)).unwrap();
        assert!((lhs - 1.0).abs() < 1e-12 && (rhs - 1.0).abs() < 1e-12);
        let (meet, join) = projection_meet_join(&e(0), &e(0)).unwrap();
        assert_eq!((meet.dim(), join.dim()), (1, 1));
    }

    #[test]
    fn random_pairs_rank_nullity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (p, q) = random_projection_pair(16, &mut rng);
            let (meet, join) = projection_meet_join(&p, &q).unwrap();
            assert_eq!(meet.dim() + join.dim(), p.dim() + q.dim());
            let (lhs, rhs) = kaplansky_check(&p, &q).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cp = constructed_pencil(10, &mut rng).unwrap();
        let lambdas: Vec<Complex64> = cp.eigen.iter().map(|e| e.0).collect();
        let (lhs, rhs) = eigenprojection_additivity(&cp.pencil, &lambdas, 1e-9).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn point_spectrum_atom() {
        let spec = EnsembleSpec::new(MeasureSpec::delta(frac(1, 2)), 0.0, 16, 1).unwrap();
        let r = point_spectrum_diagnostic(&spec, &[c(0.5), c(3.0)], &[], 2).unwrap();
        assert_eq!(r.rows[0].max, 0.0);
        assert!((r.rows[1].min - 2.5).abs() < 1e-12);
    }
}
