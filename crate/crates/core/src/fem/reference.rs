//! Tensor-product Lagrange elements on the unit square and Gauss rules.

use crate::scalar::Real;

/// Gauss-Legendre rule on [0, 1].
pub fn gauss_1d<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[0.555_555_555_555_555_6, 0.888_888_888_888_888_9, 0.555_555_555_555_555_6],
        ),
        4 => (
            &[-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6],
            &[0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9],
        ),
        _ => (
            &[-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664],
            &[0.236_926_885_056_189_1, 0.478_628_670_499_366_5, 0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1],
        ),
    };
    let half = T::lit(0.5);
    (
        x.iter().map(|&v| half * (T::lit(v) + T::one())).collect(),
        w.iter().map(|&v| half * T::lit(v)).collect(),
    )
}

/// Tensor Gauss rule on the unit square, points ordered x-fastest.
#[derive(Clone, Debug)]
pub struct Quadrature<T> {
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
}

impl<T: Real> Quadrature<T> {
    pub fn tensor(n: usize) -> Self {
        let (x, w) = gauss_1d::<T>(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Q_r Lagrange element with equispaced nodes, local node `a = j·(r+1) + i`
/// sitting at `(i/r, j/r)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceElement {
    pub degree: usize,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Self {
        assert!(degree == 1 || degree == 2, "only Q1 and Q2 are supported");
        Self { degree }
    }

    pub fn nodes_1d(&self) -> usize {
        self.degree + 1
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_1d() * self.nodes_1d()
    }

    pub fn node<T: Real>(&self, a: usize) -> [T; 2] {
        let n = self.nodes_1d();
        let r = T::from_usize_lossy(self.degree);
        [T::from_usize_lossy(a % n) / r, T::from_usize_lossy(a / n) / r]
    }

    /// Local indices of the four vertex nodes in counterclockwise order.
    pub fn vertex_nodes(&self) -> [usize; 4] {
        let r = self.degree;
        let n = r + 1;
        [0, r, n * n - 1, r * n]
    }

    fn basis_1d<T: Real>(&self, k: usize, x: T) -> (T, T) {
        let r = self.degree;
        let rf = T::from_usize_lossy(r);
        let nodes: Vec<T> = (0..=r).map(|m| T::from_usize_lossy(m) / rf).collect();
        let mut val = T::one();
        for (m, &xm) in nodes.iter().enumerate() {
            if m != k {
                val *= (x - xm) / (nodes[k] - xm);
            }
        }
        let mut der = T::zero();
        for (m, &xm) in nodes.iter().enumerate() {
            if m == k {
                continue;
            }
            let mut term = T::one() / (nodes[k] - xm);
            for (q, &xq) in nodes.iter().enumerate() {
                if q != k && q != m {
                    term *= (x - xq) / (nodes[k] - xq);
                }
            }
            der += term;
        }
        (val, der)
    }

    /// Values and reference gradients of all local basis functions at `xi`.
    pub fn eval<T: Real>(&self, xi: [T; 2]) -> (Vec<T>, Vec<[T; 2]>) {
        let n = self.nodes_1d();
        let bx: Vec<(T, T)> = (0..n).map(|k| self.basis_1d(k, xi[0])).collect();
        let by: Vec<(T, T)> = (0..n).map(|k| self.basis_1d(k, xi[1])).collect();
        let mut val = Vec::with_capacity(n * n);
        let mut grad = Vec::with_capacity(n * n);
        for (vy, dy) in &by {
            for (vx, dx) in &bx {
                val.push(*vx * *vy);
                grad.push([*dx * *vy, *vx * *dy]);
            }
        }
        (val, grad)
    }
}

/// Bilinear map of a quad: physical point, Jacobian determinant and the
/// inverse-transpose Jacobian acting on reference gradients.
#[derive(Clone, Copy, Debug)]
pub struct CellMap<T> {
    pub point: [T; 2],
    pub det: T,
    /// `inv_t[r][c]`: physical gradient component r = Σ_c inv_t[r][c] · ref_grad[c].
    pub inv_t: [[T; 2]; 2],
}

pub fn bilinear_map<T: Real>(x: &[[T; 2]; 4], xi: [T; 2]) -> CellMap<T> {
    let (s, t) = (xi[0], xi[1]);
    let one = T::one();
    let n = [(one - s) * (one - t), s * (one - t), s * t, (one - s) * t];
    let dn_ds = [-(one - t), one - t, t, -t];
    let dn_dt = [-(one - s), -s, s, one - s];
    let mut point = [T::zero(); 2];
    let mut jac = [[T::zero(); 2]; 2];
    for k in 0..4 {
        for d in 0..2 {
            point[d] += n[k] * x[k][d];
            jac[d][0] += dn_ds[k] * x[k][d];
            jac[d][1] += dn_dt[k] * x[k][d];
        }
    }
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    // J^{-T}
    let inv_t = [
        [jac[1][1] / det, -jac[1][0] / det],
        [-jac[0][1] / det, jac[0][0] / det],
    ];
    CellMap { point, det, inv_t }
}

impl<T: Real> CellMap<T> {
    #[inline]
    pub fn grad(&self, g: [T; 2]) -> [T; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}
