//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `min ½ xᵀ G x + cᵀ x` subject to `Aeq x = beq` and `Ain x <= bin`.
#[derive(Debug, Clone)]
pub struct QpSubproblem {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers of the equalities (sign free).
    pub lambda_eq: DVector<f64>,
    /// Multipliers of the inequalities (non-negative, zero when inactive).
    pub lambda_in: DVector<f64>,
    pub iterations: usize,
}

impl QpSubproblem {
    pub fn new(g: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        QpSubproblem {
            g,
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.g * x)) + self.c.dot(x)
    }

    /// Primal infeasibility, stationarity and complementarity residuals.
    pub fn residuals(&self, sol: &QpSolution) -> (f64, f64, f64) {
        let x = &sol.x;
        let eq = (&self.a_eq * x - &self.b_eq).amax();
        let ineq = (&self.a_in * x - &self.b_in).iter().fold(0.0f64, |m, v| m.max(*v));
        let grad = &self.g * x + &self.c + self.a_eq.transpose() * &sol.lambda_eq + self.a_in.transpose() * &sol.lambda_in;
        let slack = &self.b_in - &self.a_in * x;
        let comp = sol
            .lambda_in
            .iter()
            .zip(slack.iter())
            .fold(0.0f64, |m, (l, s)| m.max((l * s).abs()).max(-l));
        (eq.max(ineq), grad.amax(), comp)
    }
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

struct Factor {
    /// `J = L⁻ᵀ Q`; the first `iq` columns span the active normals.
    j: DMatrix<f64>,
    /// Upper-triangular `iq × iq` block in the top-left corner.
    r: DMatrix<f64>,
    iq: usize,
}

impl Factor {
    /// Appends a normal `np`; `d = Jᵀ np` is updated in place.
    fn add(&mut self, d: &mut DVector<f64>) -> bool {
        let n = d.len();
        for k in (self.iq + 1..n).rev() {
            let (cc, ss, h) = givens(d[k - 1], d[k]);
            if ss == 0.0 {
                continue;
            }
            d[k - 1] = h;
            d[k] = 0.0;
            for row in 0..n {
                let t1 = self.j[(row, k - 1)];
                let t2 = self.j[(row, k)];
                self.j[(row, k - 1)] = cc * t1 + ss * t2;
                self.j[(row, k)] = -ss * t1 + cc * t2;
            }
        }
        let scale = d.iter().take(self.iq + 1).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if d[self.iq].abs() <= 1e-13 * scale {
            return false;
        }
        for i in 0..=self.iq {
            self.r[(i, self.iq)] = d[i];
        }
        self.iq += 1;
        true
    }

    /// Removes active column `l` and restores the triangular shape.
    fn remove(&mut self, l: usize) {
        let n = self.j.nrows();
        for col in l..self.iq - 1 {
            for row in 0..n {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..n {
            self.r[(row, self.iq - 1)] = 0.0;
        }
        self.iq -= 1;
        for jcol in l..self.iq {
            let (cc, ss, h) = givens(self.r[(jcol, jcol)], self.r[(jcol + 1, jcol)]);
            if ss == 0.0 {
                continue;
            }
            self.r[(jcol, jcol)] = h;
            self.r[(jcol + 1, jcol)] = 0.0;
            for col in jcol + 1..self.iq {
                let t1 = self.r[(jcol, col)];
                let t2 = self.r[(jcol + 1, col)];
                self.r[(jcol, col)] = cc * t1 + ss * t2;
                self.r[(jcol + 1, col)] = -ss * t1 + cc * t2;
            }
            for row in 0..n {
                let t1 = self.j[(row, jcol)];
                let t2 = self.j[(row, jcol + 1)];
                self.j[(row, jcol)] = cc * t1 + ss * t2;
                self.j[(row, jcol + 1)] = -ss * t1 + cc * t2;
            }
        }
    }

    /// Primal direction `z` and dual direction `r` for a normal `np`.
    fn directions(&self, np: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = np.len();
        let d = self.j.transpose() * np;
        let mut z = DVector::zeros(n);
        for k in self.iq..n {
            z.axpy(d[k], &self.j.column(k), 1.0);
        }
        let mut r = DVector::zeros(self.iq);
        for i in (0..self.iq).rev() {
            let mut sum = d[i];
            for k in i + 1..self.iq {
                sum -= self.r[(i, k)] * r[k];
            }
            r[i] = sum / self.r[(i, i)];
        }
        (z, r, d)
    }
}

/// Solves a strictly convex QP.
pub fn qp_solve(qp: &QpSubproblem) -> Result<QpSolution> {
    let n = qp.c.len();
    let me = qp.b_eq.len();
    let mi = qp.b_in.len();
    let chol = qp.g.clone().cholesky().ok_or(Error::QpNotConvex)?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::QpNotConvex)?;
    let mut f = Factor {
        j: linv.transpose(),
        r: DMatrix::zeros(n, n),
        iq: 0,
    };
    let mut x = -chol.solve(&qp.c);
    // active constraints: equality i is `i`, inequality i is `me + i`
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let tol = 1e-10;
    // in the ≥ 0 convention used internally: s(x) = nᵀx - b0 with n = -a, b0 = -b
    let normal = |k: usize| -> DVector<f64> {
        if k < me {
            qp.a_eq.row(k).transpose()
        } else {
            -qp.a_in.row(k - me).transpose()
        }
    };
    let value = |k: usize, x: &DVector<f64>| -> f64 {
        if k < me {
            qp.a_eq.row(k).dot(&x.transpose()) - qp.b_eq[k]
        } else {
            qp.b_in[k - me] - qp.a_in.row(k - me).dot(&x.transpose())
        }
    };

    for k in 0..me {
        let np = normal(k);
        let (z, r, mut d) = f.directions(&np);
        let zn = z.dot(&np);
        let t = if zn.abs() > tol { -value(k, &x) / zn } else { 0.0 };
        x.axpy(t, &z, 1.0);
        for (ui, ri) in u.iter_mut().zip(r.iter()) {
            *ui -= t * ri;
        }
        u.push(t);
        active.push(k);
        if !f.add(&mut d) {
            return Err(Error::QpInfeasible);
        }
        iterations += 1;
    }

    let max_iter = 50 * (n + mi + me) + 100;
    'outer: loop {
        if iterations > max_iter {
            return Err(Error::QpInfeasible);
        }
        // most violated inequality
        let mut p = None;
        let mut worst = -1e-11;
        for i in 0..mi {
            let k = me + i;
            if active.contains(&k) {
                continue;
            }
            let s = value(k, &x);
            let scale = qp.a_in.row(i).amax().max(1.0);
            if s / scale < worst {
                worst = s / scale;
                p = Some(k);
            }
        }
        let Some(p) = p else { break };
        let np = normal(p);
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::QpInfeasible);
            }
            let (z, r, mut d) = f.directions(&np);
            // largest dual step keeping active inequality multipliers ≥ 0
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (idx, &k) in active.iter().enumerate() {
                if k >= me && r[idx] > tol && u[idx] / r[idx] < t1 {
                    t1 = u[idx] / r[idx];
                    drop = Some(idx);
                }
            }
            let zn = z.dot(&np);
            let t2 = if z.amax() > tol && zn > tol {
                -value(p, &x) / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(Error::QpInfeasible);
            }
            if t2.is_infinite() {
                for (ui, ri) in u.iter_mut().zip(r.iter()) {
                    *ui -= t * ri;
                }
                up += t;
                let idx = drop.unwrap();
                active.remove(idx);
                u.remove(idx);
                f.remove(idx);
                continue;
            }
            x.axpy(t, &z, 1.0);
            for (ui, ri) in u.iter_mut().zip(r.iter()) {
                *ui -= t * ri;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                if !f.add(&mut d) {
                    return Err(Error::QpInfeasible);
                }
                continue 'outer;
            }
            let idx = drop.unwrap();
            active.remove(idx);
            u.remove(idx);
            f.remove(idx);
        }
    }

    let mut lambda_eq = DVector::zeros(me);
    let mut lambda_in = DVector::zeros(mi);
    for (&k, &ui) in active.iter().zip(&u) {
        if k < me {
            // internal form uses +a for equalities; stationarity G x + c = Σ u n
            lambda_eq[k] = -ui;
        } else {
            lambda_in[k - me] = ui.max(0.0);
        }
    }
    Ok(QpSolution {
        x,
        lambda_eq,
        lambda_in,
        iterations,
    })
}
