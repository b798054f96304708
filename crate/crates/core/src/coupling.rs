//! Exact optimal couplings for the quadratic cost, W₂, and the first-order
//! Taylor check of Wasserstein differentiability.

use crate::calculus::{eval_f, grad_grad_w, grad_w, hess_offdiag};
use crate::kernel::SymmetricKernel;
use crate::linalg::dist_sq;
use crate::measure::DiscreteMeasure;
use crate::sum::{ComplexSum, KahanSum};
use crate::{Error, Result, C64};

pub const SIZE_GUARD: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub left: DiscreteMeasure,
    pub right: DiscreteMeasure,
    /// `(left index, right index, mass)` sorted by index pair, zero masses dropped.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn new(left: DiscreteMeasure, right: DiscreteMeasure, mut pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        left.check_dim(right.atoms()[0].len())?;
        pairs.retain(|p| p.2 > 0.0);
        pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let c = Self { left, right, pairs };
        let err = c.marginal_error();
        if err > 1e-10 {
            return Err(Error::InvalidParameter(format!("coupling marginals off by {err:e}")));
        }
        Ok(c)
    }

    /// Pairs `x_i` with `y_i` (mass `w_i`); requires equal weights.
    pub fn identity(m: &DiscreteMeasure) -> Self {
        let pairs = (0..m.len()).map(|i| (i, i, m.weight(i))).collect();
        Self { left: m.clone(), right: m.clone(), pairs }
    }

    pub fn cost(&self) -> f64 {
        let mut s = KahanSum::new();
        for &(i, j, w) in &self.pairs {
            s.add(w * dist_sq(self.left.atom(i), self.right.atom(j)));
        }
        s.value()
    }

    /// Largest deviation of a row or column sum from its marginal.
    pub fn marginal_error(&self) -> f64 {
        let mut rows = vec![0.0; self.left.len()];
        let mut cols = vec![0.0; self.right.len()];
        for &(i, j, w) in &self.pairs {
            rows[i] += w;
            cols[j] += w;
        }
        let r = rows.iter().zip(self.left.weights()).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(self.right.weights()).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }
}

fn is_uniform(m: &DiscreteMeasure) -> bool {
    let w0 = m.weight(0);
    m.weights().iter().all(|&w| (w - w0).abs() <= 1e-15)
}

/// Optimal coupling and W₂. Equal-size uniform measures go through an exact
/// assignment solver, everything else through the transportation simplex.
pub fn optimal_coupling(m: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(Coupling, f64)> {
    m.check_dim(nu.atoms()[0].len())?;
    let size = m.len() * nu.len();
    if size > SIZE_GUARD {
        return Err(Error::SizeGuardExceeded(size));
    }
    let cost: Vec<Vec<f64>> = m.atoms().iter().map(|x| nu.atoms().iter().map(|y| dist_sq(x, y)).collect()).collect();
    let pairs = if m.len() == nu.len() && is_uniform(m) && is_uniform(nu) {
        let w = 1.0 / m.len() as f64;
        hungarian(&cost).into_iter().enumerate().map(|(i, j)| (i, j, w)).collect()
    } else {
        transport_simplex(m.weights(), nu.weights(), &cost).0
    };
    let c = Coupling::new(m.clone(), nu.clone(), pairs)?;
    let w2 = c.cost().max(0.0).sqrt();
    Ok((c, w2))
}

pub fn w2(m: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(optimal_coupling(m, nu)?.1)
}

/// Square assignment by shortest augmenting paths with potentials; returns
/// the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Transportation simplex (u–v method) from a north-west-corner basis.
/// Returns the positive-mass cells and the primal–dual gap.
pub fn transport_simplex(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> (Vec<(usize, usize, f64)>, f64) {
    let (n, m) = (a.len(), b.len());
    let mut flow = vec![0.0; n * m];
    let mut basic = vec![false; n * m];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    {
        let (mut s, mut d) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let q = s[i].min(d[j]);
            flow[i * m + j] = q;
            basic[i * m + j] = true;
            basis.push((i, j));
            s[i] -= q;
            d[j] -= q;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if (s[i] <= d[j] && i < n - 1) || j == m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    let scale = cost.iter().flatten().fold(0.0f64, |x, &c| x.max(c.abs())).max(1e-300);
    let tol = 1e-12 * scale;
    let max_dantzig = 50 * (n + m) * (n + m) + 1000;
    let mut iter = 0usize;
    let (mut u, mut v) = (vec![0.0; n], vec![0.0; m]);
    loop {
        iter += 1;
        let adj = tree_adjacency(&basis, n, m);
        potentials(&adj, cost, n, &mut u, &mut v);
        let bland = iter > max_dantzig;
        let mut enter: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for i in 0..n {
            for j in 0..m {
                if basic[i * m + j] {
                    continue;
                }
                let r = cost[i][j] - u[i] - v[j];
                if r < best {
                    enter = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = enter else { break };
        // Tree path from column ej back to row ei; edges alternate −, +, −, ….
        let path = tree_path(&adj, n + ej, ei, n);
        let mut theta = f64::INFINITY;
        let mut leave = None;
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                let f = flow[r * m + c];
                if f < theta || (f == theta && Some((r, c)) < leave) {
                    theta = f;
                    leave = Some((r, c));
                }
            }
        }
        let (lr, lc) = leave.expect("cycle has a decreasing edge");
        for (idx, &(r, c)) in path.iter().enumerate() {
            if idx % 2 == 0 {
                flow[r * m + c] -= theta;
            } else {
                flow[r * m + c] += theta;
            }
        }
        flow[ei * m + ej] = theta;
        flow[lr * m + lc] = 0.0;
        basic[lr * m + lc] = false;
        basic[ei * m + ej] = true;
        let pos = basis.iter().position(|&e| e == (lr, lc)).expect("leaving cell is basic");
        basis[pos] = (ei, ej);
    }
    let mut primal = KahanSum::new();
    let mut pairs = Vec::new();
    for &(i, j) in &basis {
        let f = flow[i * m + j].max(0.0);
        if f > 0.0 {
            primal.add(f * cost[i][j]);
            pairs.push((i, j, f));
        }
    }
    let mut dual = KahanSum::new();
    a.iter().zip(&u).for_each(|(x, y)| dual.add(x * y));
    b.iter().zip(&v).for_each(|(x, y)| dual.add(x * y));
    pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    (pairs, primal.value() - dual.value())
}

/// Nodes `0..n` are rows and `n..n+m` columns.
fn tree_adjacency(basis: &[(usize, usize)], n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n + m];
    for &(i, j) in basis {
        adj[i].push(n + j);
        adj[n + j].push(i);
    }
    adj
}

fn potentials(adj: &[Vec<usize>], cost: &[Vec<f64>], n: usize, u: &mut [f64], v: &mut [f64]) {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            if node < n {
                v[next - n] = cost[node][next - n] - u[node];
            } else {
                u[next] = cost[next][node - n] - v[node - n];
            }
            stack.push(next);
        }
    }
}

/// Cells `(row, col)` on the tree path between two nodes, in order.
fn tree_path(adj: &[Vec<usize>], from: usize, to: usize, n: usize) -> Vec<(usize, usize)> {
    let mut parent = vec![usize::MAX; adj.len()];
    parent[from] = from;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &next in &adj[node] {
            if parent[next] == usize::MAX {
                parent[next] = node;
                queue.push_back(next);
            }
        }
    }
    let mut chain = vec![to];
    let mut node = to;
    while node != from {
        node = parent[node];
        chain.push(node);
    }
    chain.reverse();
    chain
        .windows(2)
        .map(|w| {
            let (r, c) = (w[0].min(w[1]), w[0].max(w[1]));
            (r, c - n)
        })
        .collect()
}

/// First-order Taylor check: remainder of `F_Φ[ν] ≈ F_Φ[m] + ∫⟨A_m(x), y − x⟩dγ₀`
/// and the bound `(C·k/2)·W₂²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorReport {
    pub remainder: f64,
    pub bound: f64,
    pub w2: f64,
}

pub fn taylor_first_order(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TaylorReport> {
    let c = phi.sup_hess().ok_or(Error::MissingHessianBound)?;
    let (gamma, w2) = optimal_coupling(m, nu)?;
    let mut lin = ComplexSum::new();
    for &(i, j, w) in &gamma.pairs {
        let x = m.atom(i);
        let y = nu.atom(j);
        let g = grad_w(phi, m, x)?;
        for ((gc, yc), xc) in g.iter().zip(y).zip(x) {
            lin.add(gc * (w * (yc - xc)));
        }
    }
    let rem = eval_f(phi, nu)? - eval_f(phi, m)? - lin.value();
    Ok(TaylorReport { remainder: rem.norm(), bound: c * phi.arity() as f64 / 2.0 * w2 * w2, w2 })
}

/// `P_γ[m](x, y) = Ã[m](x)(y − x) + ∫A_mm(x, a)(b − a) γ(da, db)`.
pub fn p_gamma(phi: &dyn SymmetricKernel, m: &DiscreteMeasure, coupling: &Coupling, x: &[f64], y: &[f64]) -> Result<Vec<C64>> {
    m.check_dim(x.len())?;
    m.check_dim(y.len())?;
    let d = x.len();
    let dx: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let mut acc: Vec<ComplexSum> = grad_grad_w(phi, m, x)?
        .mul_vec(&dx)
        .into_iter()
        .map(|v| {
            let mut s = ComplexSum::new();
            s.add(v);
            s
        })
        .collect();
    if phi.arity() >= 2 {
        for &(i, j, w) in &coupling.pairs {
            let a = coupling.left.atom(i);
            let b = coupling.right.atom(j);
            let db: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
            let h = hess_offdiag(phi, m, x, a)?;
            for (c, v) in h.mul_vec(&db).into_iter().enumerate().take(d) {
                acc[c].add(v * w);
            }
        }
    }
    Ok(acc.iter().map(|s| s.value()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ExponentialKernel, TensorPolynomial};
    use crate::rng::RngStream;
    use itertools::Itertools;

    fn d1(points: &[f64], w: Option<Vec<f64>>) -> DiscreteMeasure {
        DiscreteMeasure::new(points.iter().map(|&p| vec![p]).collect(), w).unwrap()
    }

    fn rand_points(rng: &mut RngStream, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect()).collect()
    }

    fn brute_force_uniform(m: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let n = m.len();
        (0..n)
            .permutations(n)
            .map(|p| (0..n).map(|i| dist_sq(m.atom(i), nu.atom(p[i]))).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn trivial_examples() {
        let m = d1(&[0.0, 1.0, 3.0], None);
        let (c, w) = optimal_coupling(&m, &m).unwrap();
        assert_eq!(w, 0.0);
        assert!(c.pairs.iter().all(|&(i, j, _)| i == j));

        let a = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(vec![3.0, 4.0]).unwrap();
        let (c, w) = optimal_coupling(&a, &b).unwrap();
        assert!((w - 5.0).abs() < 1e-15);
        assert_eq!(c.pairs, vec![(0, 0, 1.0)]);

        let (c, w) = optimal_coupling(&d1(&[0.0, 1.0], None), &d1(&[2.0, 3.0], None)).unwrap();
        assert!((w * w - 4.0).abs() < 1e-14);
        assert_eq!(c.pairs, vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = RngStream::new(1, 0);
        for n in 1..=4 {
            for _ in 0..25 {
                let m = DiscreteMeasure::uniform(rand_points(&mut rng, n, 2)).unwrap();
                let nu = DiscreteMeasure::uniform(rand_points(&mut rng, n, 2)).unwrap();
                let (_, w) = optimal_coupling(&m, &nu).unwrap();
                assert!((w * w - brute_force_uniform(&m, &nu)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn simplex_on_uniform_inputs_returns_a_permutation() {
        let mut rng = RngStream::new(2, 0);
        for n in 2..=6 {
            let m = DiscreteMeasure::uniform(rand_points(&mut rng, n, 2)).unwrap();
            let nu = DiscreteMeasure::uniform(rand_points(&mut rng, n, 2)).unwrap();
            let cost: Vec<Vec<f64>> =
                m.atoms().iter().map(|x| nu.atoms().iter().map(|y| dist_sq(x, y)).collect()).collect();
            let (pairs, gap) = transport_simplex(m.weights(), nu.weights(), &cost);
            assert!(gap.abs() < 1e-12);
            let w = 1.0 / n as f64;
            assert!(pairs.iter().all(|p| (p.2 - w).abs() < 1e-10), "{pairs:?}");
            let c = Coupling::new(m.clone(), nu.clone(), pairs).unwrap();
            let (_, opt) = optimal_coupling(&m, &nu).unwrap();
            assert!((c.cost() - opt * opt).abs() < 1e-13);
        }
    }

    /// Weights j/N: replicating each atom j times gives uniform measures of
    /// size N with the same optimal cost, solved by assignment.
    #[test]
    fn simplex_matches_replicated_assignment() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..30 {
            let total = 8;
            let split = |rng: &mut RngStream, parts: usize| {
                let mut counts = vec![1usize; parts];
                for _ in parts..total {
                    counts[(rng.uniform() * parts as f64) as usize] += 1;
                }
                counts
            };
            let (n1, n2) = (2 + (rng.uniform() * 3.0) as usize, 2 + (rng.uniform() * 4.0) as usize);
            let (c1, c2) = (split(&mut rng, n1), split(&mut rng, n2));
            let (p1, p2) = (rand_points(&mut rng, n1, 2), rand_points(&mut rng, n2, 2));
            let m = DiscreteMeasure::new(p1.clone(), Some(c1.iter().map(|&c| c as f64).collect())).unwrap();
            let nu = DiscreteMeasure::new(p2.clone(), Some(c2.iter().map(|&c| c as f64).collect())).unwrap();
            let expand = |p: &[Vec<f64>], c: &[usize]| {
                p.iter().zip(c).flat_map(|(x, &k)| std::iter::repeat(x.clone()).take(k)).collect::<Vec<_>>()
            };
            let em = DiscreteMeasure::uniform(expand(&p1, &c1)).unwrap();
            let enu = DiscreteMeasure::uniform(expand(&p2, &c2)).unwrap();
            let (coupling, w) = optimal_coupling(&m, &nu).unwrap();
            let (_, we) = optimal_coupling(&em, &enu).unwrap();
            assert!((w * w - we * we).abs() < 1e-12);
            assert!(coupling.marginal_error() < 1e-12);
        }
    }

    #[test]
    fn metric_properties() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..20 {
            let mk = |rng: &mut RngStream, n: usize| {
                let w = (0..n).map(|_| 0.1 + rng.uniform()).collect();
                DiscreteMeasure::new(rand_points(rng, n, 2), Some(w)).unwrap()
            };
            let (a, b, c) = (mk(&mut rng, 3), mk(&mut rng, 4), mk(&mut rng, 5));
            let (ab, ba) = (w2(&a, &b).unwrap(), w2(&b, &a).unwrap());
            assert!((ab - ba).abs() <= 1e-10);
            assert!(w2(&a, &c).unwrap() <= ab + w2(&b, &c).unwrap() + 1e-9);
        }
    }

    #[test]
    fn size_guard() {
        let big = d1(&(0..1001).map(|i| i as f64).collect::<Vec<_>>(), None);
        let other = d1(&(0..1000).map(|i| i as f64).collect::<Vec<_>>(), None);
        assert!(matches!(optimal_coupling(&big, &other), Err(Error::SizeGuardExceeded(_))));
    }

    #[test]
    fn taylor_examples() {
        let sq = TensorPolynomial::squared_norm(1).unwrap();
        let m = d1(&[0.1, 0.5], Some(vec![1.0, 3.0]));
        let r = taylor_first_order(&sq, &m, &m).unwrap();
        assert!(r.remainder < 1e-15 && r.bound == 0.0);

        // For Φ = x², F[ν] − F[m] − ∫2x(y − x)dγ = ∫(y − x)²dγ = W₂² exactly.
        let nu = d1(&[-0.3, 0.2, 0.9], None);
        let r = taylor_first_order(&sq, &m, &nu).unwrap();
        assert!((r.remainder - r.w2 * r.w2).abs() < 1e-14 && r.remainder <= r.bound + 1e-12);

        // Φ = x₁x₂, m = δ₀, ν = δ_h: F[ν] = h²/2, A_m ≡ 0, remainder h²/2, bound h².
        let prod = TensorPolynomial::coordinate_product(2, 1).unwrap();
        let h = 0.3;
        let r = taylor_first_order(&prod, &d1(&[0.0], None), &d1(&[h], None)).unwrap();
        assert!((r.remainder - h * h / 2.0).abs() < 1e-15);
        assert!((r.bound - h * h).abs() < 1e-15);

        let cubic = TensorPolynomial::coordinate_product(3, 1).unwrap();
        assert_eq!(taylor_first_order(&cubic, &m, &nu), Err(Error::MissingHessianBound));
    }

    #[test]
    fn p_gamma_reductions() {
        let phi = ExponentialKernel::new(vec![vec![0.3], vec![-0.7]]).unwrap();
        let m = d1(&[0.1, 0.4, -0.2], None);
        let id = Coupling::identity(&m);
        let p = p_gamma(&phi, &m, &id, m.atom(1), m.atom(1)).unwrap();
        assert!(p[0].norm() == 0.0);

        let k1 = ExponentialKernel::new(vec![vec![0.6]]).unwrap();
        let nu = d1(&[0.0, 0.5, 0.1], None);
        let (g, _) = optimal_coupling(&m, &nu).unwrap();
        let p = p_gamma(&k1, &m, &g, &[0.1], &[0.3]).unwrap();
        let a = grad_grad_w(&k1, &m, &[0.1]).unwrap()[(0, 0)] * 0.2;
        assert!((p[0] - a).norm() < 1e-15);
    }

    #[test]
    fn p_gamma_quadratic_kernel_matches_gradient_difference() {
        // Φ = x₁x₂ + x₁² + x₂²: A_m(x) = 2x + mean(m) + ... linear in (x, m), so the
        // second-order expansion is exact.
        let phi = TensorPolynomial::new(
            2,
            1,
            vec![
                crate::kernel::PolyTerm { coef: 1.0, exponents: vec![vec![1], vec![1]] },
                crate::kernel::PolyTerm { coef: 1.0, exponents: vec![vec![2], vec![0]] },
                crate::kernel::PolyTerm { coef: 1.0, exponents: vec![vec![0], vec![2]] },
            ],
        )
        .unwrap();
        let m = d1(&[0.1, 0.4, -0.2], None);
        let nu = d1(&[0.3, 0.9, -0.5], None);
        let (g, _) = optimal_coupling(&m, &nu).unwrap();
        for &(i, j, _) in &g.pairs {
            let (x, y) = (m.atom(i), nu.atom(j));
            let defect = grad_w(&phi, &nu, y).unwrap()[0] - grad_w(&phi, &m, x).unwrap()[0]
                - p_gamma(&phi, &m, &g, x, y).unwrap()[0];
            assert!(defect.norm() < 1e-14);
        }
    }

    #[test]
    fn second_order_defect_decays() {
        let mut rng = RngStream::new(5, 0);
        let phi = ExponentialKernel::new(vec![vec![0.4, -0.3], vec![0.2, 0.5]]).unwrap();
        let m = DiscreteMeasure::new(rand_points(&mut rng, 4, 2), Some(vec![0.1, 0.2, 0.3, 0.4])).unwrap();
        let field = rand_points(&mut rng, 4, 2);
        let mut prev = f64::INFINITY;
        for h in [1e-1, 1e-2, 1e-3, 1e-4] {
            let nu = m.displace(&field, h).unwrap();
            let (g, w) = optimal_coupling(&m, &nu).unwrap();
            let mut worst: f64 = 0.0;
            for &(i, j, _) in &g.pairs {
                let (x, y) = (m.atom(i), nu.atom(j));
                let lhs: Vec<C64> = grad_w(&phi, &nu, y).unwrap();
                let rhs: Vec<C64> = grad_w(&phi, &m, x).unwrap();
                let p = p_gamma(&phi, &m, &g, x, y).unwrap();
                let d: f64 = (0..2).map(|c| (lhs[c] - rhs[c] - p[c]).norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(d / (dist_sq(x, y).sqrt() + w));
            }
            assert!(worst <= prev * 1.1, "h={h}: {worst} vs {prev}");
            prev = worst;
        }
        assert!(prev < 1e-3);
    }
}
