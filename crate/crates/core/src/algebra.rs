//! Finite-dimensional Lie algebras given by structure constants, their dual
//! spaces, and matrix groups acting on them.
//!
//! Elements are stored as coordinate vectors in a fixed basis. A matrix
//! realization (hat/vee) is optional derived data; so(3) has the usual one,
//! algebras defined by structure constants fall back to the adjoint
//! representation when it is faithful.
//!
//! Sign conventions are fixed by pairings:
//! `bracket(e_i, e_j) = C^k_ij e_k`, `<ad_star(xi, mu), eta> = <mu, [xi, eta]>`,
//! `<coadjoint(g, mu), xi> = <mu, adjoint(g, xi)>`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_len, GeoError, Result};

const JACOBI_TOL: f64 = 1e-12;
const SO3_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RealizationKind {
    So3,
    Matrix,
}

#[derive(Debug, Clone, PartialEq)]
struct Realization {
    kind: RealizationKind,
    n: usize,
    basis: Vec<DMatrix<f64>>,
    // Least-squares left inverse of the vectorized basis, r x n^2.
    vee_map: DMatrix<f64>,
}

/// A real Lie algebra of dimension `r` described by its structure constants.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraDescriptor {
    name: String,
    dim: usize,
    // ad[i][(k, j)] = C^k_ij
    ad: Vec<DMatrix<f64>>,
    basis_names: Vec<String>,
    realization: Option<Realization>,
}

impl AlgebraDescriptor {
    /// so(3) with `[e1, e2] = e3` and the cross-product hat map.
    pub fn so3() -> Self {
        let mut c = vec![0.0; 27];
        for (i, j, k, s) in [
            (0, 1, 2, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (1, 0, 2, -1.0),
            (2, 1, 0, -1.0),
            (0, 2, 1, -1.0),
        ] {
            c[(i * 3 + j) * 3 + k] = s;
        }
        let ad = ad_from_flat(3, &c);
        let basis: Vec<DMatrix<f64>> = (0..3)
            .map(|i| {
                let mut e = DVector::zeros(3);
                e[i] = 1.0;
                so3_hat(&e)
            })
            .collect();
        let vee_map = left_inverse(&basis, 3).expect("so(3) basis is independent");
        Self {
            name: "so3".into(),
            dim: 3,
            ad,
            basis_names: vec!["e1".into(), "e2".into(), "e3".into()],
            realization: Some(Realization {
                kind: RealizationKind::So3,
                n: 3,
                basis,
                vee_map,
            }),
        }
    }

    /// se(2) realized by 3x3 matrices; basis (rotation, x-translation, y-translation).
    pub fn se2() -> Self {
        let mut rot = DMatrix::zeros(3, 3);
        rot[(0, 1)] = -1.0;
        rot[(1, 0)] = 1.0;
        let mut tx = DMatrix::zeros(3, 3);
        tx[(0, 2)] = 1.0;
        let mut ty = DMatrix::zeros(3, 3);
        ty[(1, 2)] = 1.0;
        Self::from_matrix_basis("se2", vec![rot, tx, ty], None).expect("se(2) basis is closed")
    }

    /// The abelian algebra R^n, realized by translations in (n+1)x(n+1) matrices.
    pub fn abelian(n: usize) -> Self {
        let basis = (0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(n + 1, n + 1);
                m[(i, n)] = 1.0;
                m
            })
            .collect();
        Self::from_matrix_basis(&format!("r{n}"), basis, None).expect("translations commute")
    }

    /// The zero algebra (trivial group).
    pub fn trivial() -> Self {
        Self {
            name: "trivial".into(),
            dim: 0,
            ad: Vec::new(),
            basis_names: Vec::new(),
            realization: Some(Realization {
                kind: RealizationKind::Matrix,
                n: 1,
                basis: Vec::new(),
                vee_map: DMatrix::zeros(0, 1),
            }),
        }
    }

    /// Builds an algebra from `C^k_ij`, flattened as `c[(i * r + j) * r + k]`.
    ///
    /// Antisymmetry and the Jacobi identity are checked. If the adjoint
    /// representation is faithful it becomes the matrix realization.
    pub fn from_structure_constants(
        name: &str,
        dim: usize,
        constants: &[f64],
        basis_names: Option<Vec<String>>,
    ) -> Result<Self> {
        check_len(dim * dim * dim, constants.len())?;
        let scale = constants.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let a = constants[(i * dim + j) * dim + k];
                    let b = constants[(j * dim + i) * dim + k];
                    if (a + b).abs() > JACOBI_TOL * scale {
                        return Err(GeoError::Parameter(format!(
                            "structure constants not antisymmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        let names = basis_names.unwrap_or_else(|| (1..=dim).map(|i| format!("e{i}")).collect());
        check_len(dim, names.len())?;
        let ad = ad_from_flat(dim, constants);
        let mut alg = Self {
            name: name.into(),
            dim,
            ad,
            basis_names: names,
            realization: None,
        };
        let jac = alg.jacobi_residual();
        if jac > JACOBI_TOL * scale * scale {
            return Err(GeoError::Parameter(format!(
                "structure constants violate the Jacobi identity (residual {jac:e})"
            )));
        }
        if dim > 0 {
            if let Some(vee_map) = left_inverse(&alg.ad, dim) {
                alg.realization = Some(Realization {
                    kind: RealizationKind::Matrix,
                    n: dim,
                    basis: alg.ad.clone(),
                    vee_map,
                });
            }
        }
        Ok(alg)
    }

    /// Builds an algebra from a basis of n x n matrices closed under the commutator.
    pub fn from_matrix_basis(
        name: &str,
        basis: Vec<DMatrix<f64>>,
        basis_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let r = basis.len();
        let n = basis.first().map(|m| m.nrows()).unwrap_or(1);
        for m in &basis {
            if m.nrows() != n || m.ncols() != n {
                return Err(GeoError::Dimension {
                    expected: n,
                    found: m.nrows().max(m.ncols()),
                });
            }
        }
        let vee_map = left_inverse(&basis, n)
            .ok_or_else(|| GeoError::Parameter("matrix basis is linearly dependent".into()))?;
        let mut c = vec![0.0; r * r * r];
        for i in 0..r {
            for j in 0..r {
                let comm = &basis[i] * &basis[j] - &basis[j] * &basis[i];
                let coords = &vee_map * flatten(&comm);
                let back = combine(&basis, &coords, n);
                if (&back - &comm).amax() > JACOBI_TOL * (1.0 + comm.amax()) {
                    return Err(GeoError::Parameter(
                        "matrix basis is not closed under the commutator".into(),
                    ));
                }
                for k in 0..r {
                    c[(i * r + j) * r + k] = coords[k];
                }
            }
        }
        let names = basis_names.unwrap_or_else(|| (1..=r).map(|i| format!("e{i}")).collect());
        check_len(r, names.len())?;
        Ok(Self {
            name: name.into(),
            dim: r,
            ad: ad_from_flat(r, &c),
            basis_names: names,
            realization: Some(Realization {
                kind: RealizationKind::Matrix,
                n,
                basis,
                vee_map,
            }),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }

    /// `C^k_ij`.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> f64 {
        self.ad[i][(k, j)]
    }

    /// Size of the matrix realization, if any.
    pub fn matrix_dim(&self) -> Option<usize> {
        self.realization.as_ref().map(|r| r.n)
    }

    pub fn is_so3(&self) -> bool {
        matches!(&self.realization, Some(r) if r.kind == RealizationKind::So3)
    }

    /// Cyclic Jacobi sum, maximized over all index tuples.
    pub fn jacobi_residual(&self) -> f64 {
        let r = self.dim;
        let c = |i: usize, j: usize, k: usize| self.ad[i][(k, j)];
        let mut worst = 0.0_f64;
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    for l in 0..r {
                        let mut s = 0.0;
                        for m in 0..r {
                            s += c(i, j, m) * c(m, k, l)
                                + c(j, k, m) * c(m, i, l)
                                + c(k, i, m) * c(m, j, l);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Matrix of `ad_xi` in the coordinate basis, `(ad_xi)_kj = sum_i C^k_ij xi_i`.
    pub fn ad_matrix(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.dim, xi.len())?;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, a) in self.ad.iter().enumerate() {
            if xi[i] != 0.0 {
                m += a * xi[i];
            }
        }
        Ok(m)
    }

    pub fn bracket(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim, eta.len())?;
        Ok(self.ad_matrix(xi)? * eta)
    }

    /// `ad*_xi mu`, defined by `<ad*_xi mu, eta> = <mu, [xi, eta]>`.
    pub fn ad_star(&self, xi: &DVector<f64>, mu: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim, mu.len())?;
        Ok(self.ad_matrix(xi)?.tr_mul(mu))
    }

    fn realization(&self) -> Result<&Realization> {
        self.realization
            .as_ref()
            .ok_or_else(|| GeoError::UnsupportedRealization(self.name.clone()))
    }

    pub fn hat(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let real = self.realization()?;
        check_len(self.dim, xi.len())?;
        Ok(match real.kind {
            RealizationKind::So3 => so3_hat(xi),
            RealizationKind::Matrix => combine(&real.basis, xi, real.n),
        })
    }

    pub fn vee(&self, m: &DMatrix<f64>) -> Result<DVector<f64>> {
        let real = self.realization()?;
        if m.nrows() != real.n || m.ncols() != real.n {
            return Err(GeoError::Dimension {
                expected: real.n,
                found: m.nrows(),
            });
        }
        Ok(match real.kind {
            RealizationKind::So3 => DVector::from_vec(vec![m[(2, 1)], m[(0, 2)], m[(1, 0)]]),
            RealizationKind::Matrix => &real.vee_map * flatten(m),
        })
    }

    /// Largest deviation of `hat([xi, eta])` from the matrix commutator.
    pub fn hat_homomorphism_residual(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
        let a = self.hat(xi)?;
        let b = self.hat(eta)?;
        let lhs = self.hat(&self.bracket(xi, eta)?)?;
        Ok((lhs - (&a * &b - &b * &a)).amax())
    }

    pub fn identity(&self) -> Result<GroupElement> {
        let real = self.realization()?;
        let tag = match real.kind {
            RealizationKind::So3 => GroupTag::So3,
            RealizationKind::Matrix => GroupTag::General,
        };
        Ok(GroupElement {
            matrix: DMatrix::identity(real.n, real.n),
            tag,
        })
    }

    /// Wraps a matrix as an element of this algebra's group, validating membership.
    pub fn group_element(&self, matrix: DMatrix<f64>) -> Result<GroupElement> {
        let id = self.identity()?;
        let g = GroupElement {
            matrix,
            tag: id.tag,
        };
        self.check_member(&g)?;
        Ok(g)
    }

    pub(crate) fn check_member(&self, g: &GroupElement) -> Result<()> {
        let real = self.realization()?;
        if g.matrix.nrows() != real.n || g.matrix.ncols() != real.n {
            return Err(GeoError::Membership(format!(
                "expected a {n}x{n} matrix, found {}x{}",
                g.matrix.nrows(),
                g.matrix.ncols(),
                n = real.n
            )));
        }
        g.validate()
    }

    /// Matrix of `Ad_g` in the coordinate basis.
    pub fn adjoint_matrix(&self, g: &GroupElement) -> Result<DMatrix<f64>> {
        self.check_member(g)?;
        let real = self.realization()?;
        if real.kind == RealizationKind::So3 {
            return Ok(g.matrix.clone());
        }
        let ginv = g.inverse()?;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (j, e) in real.basis.iter().enumerate() {
            let col = &real.vee_map * flatten(&(&g.matrix * e * &ginv.matrix));
            m.set_column(j, &col);
        }
        Ok(m)
    }

    /// `Ad_g xi = vee(g hat(xi) g^-1)`.
    pub fn adjoint(&self, g: &GroupElement, xi: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim, xi.len())?;
        Ok(self.adjoint_matrix(g)? * xi)
    }

    /// Dual of `adjoint`: `<coadjoint(g, mu), xi> = <mu, Ad_g xi>`.
    pub fn coadjoint(&self, g: &GroupElement, mu: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim, mu.len())?;
        Ok(self.adjoint_matrix(g)?.tr_mul(mu))
    }
}

impl fmt::Display for AlgebraDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (dim {})", self.name, self.dim)
    }
}

/// Which validity test applies to a group element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupTag {
    So3,
    General,
}

/// An element of a matrix Lie group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    matrix: DMatrix<f64>,
    tag: GroupTag,
}

impl GroupElement {
    /// A rotation matrix, checked against `|R^T R - I| <= 1e-10` and `det R = 1`.
    pub fn so3(matrix: DMatrix<f64>) -> Result<Self> {
        let g = Self {
            matrix,
            tag: GroupTag::So3,
        };
        g.validate()?;
        Ok(g)
    }

    /// An invertible square matrix.
    pub fn general(matrix: DMatrix<f64>) -> Result<Self> {
        let g = Self {
            matrix,
            tag: GroupTag::General,
        };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn from_parts(matrix: DMatrix<f64>, tag: GroupTag) -> Self {
        Self { matrix, tag }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn tag(&self) -> GroupTag {
        self.tag
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if !m.is_square() {
            return Err(GeoError::Membership("matrix is not square".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(GeoError::Membership("non-finite entry".into()));
        }
        match self.tag {
            GroupTag::So3 => {
                if m.nrows() != 3 {
                    return Err(GeoError::Membership("SO(3) element must be 3x3".into()));
                }
                let orth = self.orthogonality_defect();
                let det = m.determinant();
                if orth > SO3_TOL || (det - 1.0).abs() > SO3_TOL {
                    return Err(GeoError::Membership(format!(
                        "not a rotation: |R^T R - I| = {orth:e}, det = {det}"
                    )));
                }
            }
            GroupTag::General => {
                if m.determinant().abs() < 1e-14 {
                    return Err(GeoError::Membership("matrix is singular".into()));
                }
            }
        }
        Ok(())
    }

    /// `max |g^T g - I|`, the drift monitor for rotations.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        (self.matrix.tr_mul(&self.matrix) - DMatrix::identity(n, n)).amax()
    }

    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        check_len(self.matrix.nrows(), other.matrix.nrows())?;
        Ok(GroupElement {
            matrix: &self.matrix * &other.matrix,
            tag: self.tag,
        })
    }

    pub fn inverse(&self) -> Result<GroupElement> {
        let matrix = match self.tag {
            GroupTag::So3 => self.matrix.transpose(),
            GroupTag::General => self
                .matrix
                .clone()
                .try_inverse()
                .ok_or_else(|| GeoError::Membership("matrix is singular".into()))?,
        };
        Ok(GroupElement {
            matrix,
            tag: self.tag,
        })
    }

    /// Projects a drifting rotation back onto SO(3) (polar factor via SVD).
    pub fn reorthonormalized(&self) -> GroupElement {
        if self.tag != GroupTag::So3 {
            return self.clone();
        }
        let svd = self.matrix.clone().svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        GroupElement {
            matrix: u * vt,
            tag: self.tag,
        }
    }
}

/// A Lie algebra element tied to its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    pub coords: DVector<f64>,
    pub algebra: Arc<AlgebraDescriptor>,
}

/// A dual-space element tied to its descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoAlgebraElement {
    pub coords: DVector<f64>,
    pub algebra: Arc<AlgebraDescriptor>,
}

impl AlgebraElement {
    pub fn new(algebra: Arc<AlgebraDescriptor>, coords: DVector<f64>) -> Result<Self> {
        check_len(algebra.dim(), coords.len())?;
        Ok(Self { coords, algebra })
    }
}

impl CoAlgebraElement {
    pub fn new(algebra: Arc<AlgebraDescriptor>, coords: DVector<f64>) -> Result<Self> {
        check_len(algebra.dim(), coords.len())?;
        Ok(Self { coords, algebra })
    }

    /// Dual pairing `<mu, xi>`.
    pub fn pair(&self, xi: &AlgebraElement) -> Result<f64> {
        same_algebra(&self.algebra, &xi.algebra)?;
        Ok(self.coords.dot(&xi.coords))
    }
}

fn same_algebra(a: &Arc<AlgebraDescriptor>, b: &Arc<AlgebraDescriptor>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(GeoError::Dimension {
            expected: a.dim(),
            found: b.dim(),
        })
    }
}

pub fn hat(xi: &AlgebraElement) -> Result<DMatrix<f64>> {
    xi.algebra.hat(&xi.coords)
}

pub fn vee(algebra: &Arc<AlgebraDescriptor>, m: &DMatrix<f64>) -> Result<AlgebraElement> {
    AlgebraElement::new(algebra.clone(), algebra.vee(m)?)
}

pub fn bracket(xi: &AlgebraElement, eta: &AlgebraElement) -> Result<AlgebraElement> {
    same_algebra(&xi.algebra, &eta.algebra)?;
    AlgebraElement::new(xi.algebra.clone(), xi.algebra.bracket(&xi.coords, &eta.coords)?)
}

pub fn ad_star(xi: &AlgebraElement, mu: &CoAlgebraElement) -> Result<CoAlgebraElement> {
    same_algebra(&xi.algebra, &mu.algebra)?;
    CoAlgebraElement::new(xi.algebra.clone(), xi.algebra.ad_star(&xi.coords, &mu.coords)?)
}

pub fn adjoint(g: &GroupElement, xi: &AlgebraElement) -> Result<AlgebraElement> {
    AlgebraElement::new(xi.algebra.clone(), xi.algebra.adjoint(g, &xi.coords)?)
}

pub fn coadjoint(g: &GroupElement, mu: &CoAlgebraElement) -> Result<CoAlgebraElement> {
    CoAlgebraElement::new(mu.algebra.clone(), mu.algebra.coadjoint(g, &mu.coords)?)
}

/// The so(3) hat map with rows `(0,-z,y; z,0,-x; -y,x,0)`.
pub fn so3_hat(w: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0])
}

/// Uniformly distributed rotation from a normalized random quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> GroupElement {
    let q = loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            break v.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    );
    GroupElement::from_parts(m, GroupTag::So3)
}

fn ad_from_flat(r: usize, c: &[f64]) -> Vec<DMatrix<f64>> {
    (0..r)
        .map(|i| DMatrix::from_fn(r, r, |k, j| c[(i * r + j) * r + k]))
        .collect()
}

fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn combine(basis: &[DMatrix<f64>], coords: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (b, c) in basis.iter().zip(coords.iter()) {
        if *c != 0.0 {
            m += b * *c;
        }
    }
    m
}

fn left_inverse(basis: &[DMatrix<f64>], n: usize) -> Option<DMatrix<f64>> {
    let r = basis.len();
    if r == 0 {
        return Some(DMatrix::zeros(0, n * n));
    }
    let mut a = DMatrix::zeros(n * n, r);
    for (j, b) in basis.iter().enumerate() {
        a.set_column(j, &flatten(b));
    }
    let gram = a.tr_mul(&a);
    let inv = gram.try_inverse()?;
    if inv.iter().any(|x| !x.is_finite()) || inv.amax() > 1e12 {
        return None;
    }
    Some(inv * a.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn so3_hat_of_e1() {
        let a = AlgebraDescriptor::so3();
        let m = a.hat(&v(&[1.0, 0.0, 0.0])).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 0., -1., 0., 1., 0.]);
        assert_eq!(m, expected);
        assert_eq!(a.hat(&v(&[0.0, 0.0, 0.0])).unwrap(), DMatrix::zeros(3, 3));
        assert_eq!(a.vee(&a.hat(&v(&[1.0, 2.0, 3.0])).unwrap()).unwrap(), v(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn brackets_match_commutators() {
        let a = AlgebraDescriptor::so3();
        let comm = |x: &DVector<f64>, y: &DVector<f64>| {
            let (hx, hy) = (a.hat(x).unwrap(), a.hat(y).unwrap());
            a.vee(&(&hx * &hy - &hy * &hx)).unwrap()
        };
        let e1 = v(&[1.0, 0.0, 0.0]);
        let e2 = v(&[0.0, 1.0, 0.0]);
        let e3 = v(&[0.0, 0.0, 1.0]);
        assert_eq!(a.bracket(&e1, &e2).unwrap(), e3);
        assert_eq!(a.bracket(&e1, &e2).unwrap(), comm(&e1, &e2));
        assert_eq!(a.bracket(&e1, &e3).unwrap(), v(&[0.0, -1.0, 0.0]));
        assert_eq!(a.bracket(&e1, &e3).unwrap(), comm(&e1, &e3));
        let x = v(&[0.3, -1.2, 2.0]);
        assert_eq!(a.bracket(&x, &x).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn ad_star_matches_pairing_oracle() {
        let a = AlgebraDescriptor::so3();
        let xi = v(&[1.0, 0.0, 0.0]);
        let mu = v(&[0.0, 1.0, 0.0]);
        let got = a.ad_star(&xi, &mu).unwrap();
        let mut oracle = DVector::zeros(3);
        for j in 0..3 {
            let mut eta = DVector::zeros(3);
            eta[j] = 1.0;
            oracle[j] = mu.dot(&a.bracket(&xi, &eta).unwrap());
        }
        assert_eq!(got, oracle);
        assert_eq!(got, v(&[0.0, 0.0, -1.0]));
        assert_eq!(a.ad_star(&DVector::zeros(3), &mu).unwrap(), DVector::zeros(3));
        let xi = v(&[0.4, -0.2, 0.9]);
        assert!(a.ad_star(&xi, &(&xi * 2.5)).unwrap().amax() < 1e-15);
    }

    #[test]
    fn adjoint_of_quarter_turn() {
        let a = AlgebraDescriptor::so3();
        let rx = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., -1., 0., 1., 0.]);
        let g = GroupElement::so3(rx).unwrap();
        let out = a.adjoint(&g, &v(&[0.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(out, v(&[0.0, 0.0, 1.0]), epsilon = 1e-15);
        let xi = v(&[0.1, 0.2, 0.3]);
        assert_eq!(a.adjoint(&a.identity().unwrap(), &xi).unwrap(), xi);
    }

    #[test]
    fn shipped_descriptors_satisfy_jacobi() {
        for a in [
            AlgebraDescriptor::so3(),
            AlgebraDescriptor::se2(),
            AlgebraDescriptor::abelian(2),
            AlgebraDescriptor::trivial(),
        ] {
            assert!(a.jacobi_residual() <= 1e-12, "{}", a.name());
        }
    }

    #[test]
    fn se2_matrix_constants() {
        let a = AlgebraDescriptor::se2();
        // [rot, tx] = ty and [rot, ty] = -tx
        assert_relative_eq!(a.structure_constant(0, 1, 2), 1.0, epsilon = 1e-15);
        assert_relative_eq!(a.structure_constant(0, 2, 1), -1.0, epsilon = 1e-15);
        assert_relative_eq!(a.structure_constant(1, 2, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn structure_constant_validation() {
        let so3 = AlgebraDescriptor::so3();
        let mut c = vec![0.0; 27];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[(i * 3 + j) * 3 + k] = so3.structure_constant(i, j, k);
                }
            }
        }
        let custom = AlgebraDescriptor::from_structure_constants("custom", 3, &c, None).unwrap();
        assert_eq!(custom.matrix_dim(), Some(3));
        let x = v(&[0.3, 0.1, -0.7]);
        let y = v(&[1.1, -0.4, 0.2]);
        assert!(custom.hat_homomorphism_residual(&x, &y).unwrap() < 1e-12);
        assert_relative_eq!(custom.vee(&custom.hat(&x).unwrap()).unwrap(), x, epsilon = 1e-14);

        let mut bad = c.clone();
        bad[5] = 2.0;
        assert!(matches!(
            AlgebraDescriptor::from_structure_constants("bad", 3, &bad, None),
            Err(GeoError::Parameter(_))
        ));
        // antisymmetric but not Jacobi: [e1,e2]=e1, [e2,e3]=e1, [e1,e3]=e3
        let mut nj = vec![0.0; 27];
        let mut set = |i: usize, j: usize, k: usize, s: f64| {
            nj[(i * 3 + j) * 3 + k] = s;
            nj[(j * 3 + i) * 3 + k] = -s;
        };
        set(0, 1, 0, 1.0);
        set(1, 2, 0, 1.0);
        set(0, 2, 2, 1.0);
        assert!(AlgebraDescriptor::from_structure_constants("nj", 3, &nj, None).is_err());
    }

    #[test]
    fn abelian_has_no_faithful_adjoint() {
        let c = vec![0.0; 8];
        let a = AlgebraDescriptor::from_structure_constants("r2", 2, &c, None).unwrap();
        assert!(matches!(
            a.hat(&v(&[1.0, 0.0])),
            Err(GeoError::UnsupportedRealization(_))
        ));
    }

    #[test]
    fn membership_is_checked() {
        let a = AlgebraDescriptor::so3();
        let bad = DMatrix::from_diagonal_element(3, 3, 2.0);
        assert!(matches!(
            GroupElement::so3(bad.clone()),
            Err(GeoError::Membership(_))
        ));
        assert!(a.group_element(bad).is_err());
    }

    #[test]
    fn typed_elements_reject_mixed_algebras() {
        let so3 = Arc::new(AlgebraDescriptor::so3());
        let se2 = Arc::new(AlgebraDescriptor::se2());
        let x = AlgebraElement::new(so3.clone(), v(&[1.0, 0.0, 0.0])).unwrap();
        let y = AlgebraElement::new(se2, v(&[1.0, 0.0, 0.0])).unwrap();
        assert!(bracket(&x, &y).is_err());
        assert!(AlgebraElement::new(so3, v(&[1.0])).is_err());
    }

    #[test]
    fn reorthonormalize_restores_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_rotation(&mut rng);
        let noisy = GroupElement::from_parts(g.matrix() * (1.0 + 1e-6), GroupTag::So3);
        assert!(noisy.orthogonality_defect() > 1e-7);
        assert!(noisy.reorthonormalized().orthogonality_defect() < 1e-14);
    }
}
