//! Duality between the reservoir process and a sink process with finitely
//! many particles: the duality function, finite generators, expectations by
//! uniformization, and the single-particle absorbed walk.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::domain::{DomainSpec, OuterMode, SiteClass};
use crate::error::{invalid, Error, Result};
use crate::sep_process::{replica_rng, ProcessParams};

/// Default bound on enumerated states.
pub const DEFAULT_STATE_CAP: usize = 20_000;

/// Most dual particles a `DualSink` generator enumerates.
pub const MAX_DUAL_PARTICLES: usize = 3;

/// Poisson tail mass allowed to be dropped by [`propagate`].
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Interior(usize),
    Boundary(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    interior: usize,
    other: Node,
    weight: f64,
}

/// Finite site graph: interior nodes carry occupancy, boundary nodes are
/// reservoirs (parameter `alpha`) or truncation sinks (parameter 0).
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGraph {
    n_interior: usize,
    truncation_sink: Vec<bool>,
    edges: Vec<Edge>,
}

impl SiteGraph {
    /// Chain `b0 - x0 - ... - x(n-1) - b1` with reservoirs at both ends and
    /// the one-dimensional jump probability 1/2.
    pub fn segment(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("segment needs at least one interior site"));
        }
        let mut edges = vec![Edge { interior: 0, other: Node::Boundary(0), weight: 0.5 }];
        for x in 1..n {
            edges.push(Edge { interior: x - 1, other: Node::Interior(x), weight: 0.5 });
        }
        edges.push(Edge { interior: n - 1, other: Node::Boundary(1), weight: 0.5 });
        Ok(Self { n_interior: n, truncation_sink: vec![false, false], edges })
    }

    /// Graph of a lattice domain. Interior node `i` is
    /// `domain.interior_sites()[i]`, boundary node `j` is
    /// `domain.boundary_sites()[j]`; an absorbing outer truncation adds one
    /// extra sink node last.
    pub fn from_domain(domain: &DomainSpec) -> Self {
        let p = 1.0 / domain.num_directions() as f64;
        let interior: HashMap<u32, usize> =
            domain.interior_sites().iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let boundary: HashMap<u32, usize> =
            domain.boundary_sites().iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let nb = boundary.len();
        let absorbing = domain.outer_mode() == OuterMode::Absorbing;
        let mut edges = Vec::new();
        for (i, &x) in domain.interior_sites().iter().enumerate() {
            let mut exits = 0usize;
            for dir in 0..domain.num_directions() {
                let y = domain.neighbor(x as usize, dir);
                match domain.class_of(y) {
                    SiteClass::Interior => {
                        let j = interior[&(y as u32)];
                        if j > i {
                            edges.push(Edge { interior: i, other: Node::Interior(j), weight: p });
                        }
                    }
                    SiteClass::Boundary => edges.push(Edge {
                        interior: i,
                        other: Node::Boundary(boundary[&(y as u32)]),
                        weight: p,
                    }),
                    SiteClass::Outside => exits += 1,
                }
            }
            if absorbing && exits > 0 {
                edges.push(Edge { interior: i, other: Node::Boundary(nb), weight: p * exits as f64 });
            }
        }
        let mut truncation_sink = vec![false; nb];
        if absorbing {
            truncation_sink.push(true);
        }
        Self { n_interior: interior.len(), truncation_sink, edges }
    }

    pub fn num_interior(&self) -> usize {
        self.n_interior
    }

    pub fn num_boundary(&self) -> usize {
        self.truncation_sink.len()
    }

    /// Boundary parameter of boundary node `b` under `params`.
    pub fn boundary_alpha(&self, params: &ProcessParams, b: usize) -> f64 {
        if self.truncation_sink[b] {
            0.0
        } else {
            params.alpha()
        }
    }
}

/// Finitely many dual particles: interior occupancies and frozen boundary counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct DualConfig {
    pub interior: Vec<u32>,
    pub boundary: Vec<u32>,
}

impl DualConfig {
    pub fn empty(graph: &SiteGraph) -> Self {
        Self {
            interior: vec![0; graph.num_interior()],
            boundary: vec![0; graph.num_boundary()],
        }
    }

    pub fn total(&self) -> u32 {
        self.interior.iter().sum::<u32>() + self.boundary.iter().sum::<u32>()
    }

    fn check_shape(&self, graph: &SiteGraph) -> Result<()> {
        if self.interior.len() != graph.num_interior() || self.boundary.len() != graph.num_boundary() {
            return Err(invalid("dual configuration does not match the graph"));
        }
        Ok(())
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Duality function between interior occupancies `s` and dual configuration `dual`.
pub fn duality_fn(graph: &SiteGraph, params: &ProcessParams, s: &[u32], dual: &DualConfig) -> Result<f64> {
    dual.check_shape(graph)?;
    if s.len() != graph.num_interior() {
        return Err(invalid("configuration does not match the graph"));
    }
    let m = params.m();
    let mut value = 1.0;
    for (&k, &kd) in s.iter().zip(&dual.interior) {
        if kd > m {
            return Err(invalid(format!("dual occupancy {kd} exceeds m = {m}")));
        }
        if k > m {
            return Err(invalid(format!("occupancy {k} exceeds m = {m}")));
        }
        if k < kd {
            return Ok(0.0);
        }
        value *= binomial(k, kd) / binomial(m, kd);
    }
    for (b, &kd) in dual.boundary.iter().enumerate() {
        value *= graph.boundary_alpha(params, b).powi(kd as i32);
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Reservoir process on interior occupancies `{0..m}^n`.
    Primal,
    /// Sink dynamics of exactly `particles` dual particles.
    DualSink { particles: usize },
}

/// Sparse generator over an enumerated state list. A state is the interior
/// occupancy vector, followed by the boundary counts for dual states.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    kind: GeneratorKind,
    n_interior: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl GeneratorMatrix {
    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn index_of(&self, state: &[u8]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Off-diagonal entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Entry `Q[i][j]`, diagonal included.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let off: f64 = self.rows[i].iter().filter(|e| e.0 == j).map(|e| e.1).sum();
        if i == j {
            -self.exit_rate(i)
        } else {
            off
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    /// Primal index of interior occupancies.
    pub fn primal_index(&self, s: &[u32]) -> Option<usize> {
        let key: Vec<u8> = s.iter().map(|&k| u8::try_from(k).unwrap_or(u8::MAX)).collect();
        self.index_of(&key)
    }

    /// Dual index of a dual configuration.
    pub fn dual_index(&self, dual: &DualConfig) -> Option<usize> {
        let key: Vec<u8> = dual
            .interior
            .iter()
            .chain(&dual.boundary)
            .map(|&k| u8::try_from(k).unwrap_or(u8::MAX))
            .collect();
        self.index_of(&key)
    }

    fn to_dual(&self, state: &[u8]) -> DualConfig {
        DualConfig {
            interior: state[..self.n_interior].iter().map(|&k| k as u32).collect(),
            boundary: state[self.n_interior..].iter().map(|&k| k as u32).collect(),
        }
    }
}

fn enumerate_primal(n: usize, m: u32, cap: usize) -> Result<Vec<Vec<u8>>> {
    let count = (m as f64 + 1.0).powi(n as i32);
    if count > cap as f64 {
        return Err(Error::StateSpaceTooLarge { states: count as usize, cap });
    }
    let mut out = vec![vec![0u8; n]];
    for i in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..=m as u8).map(move |k| {
                    let mut t = s.clone();
                    t[i] = k;
                    t
                })
            })
            .collect();
    }
    Ok(out)
}

fn enumerate_dual(n_int: usize, n_bnd: usize, m: u32, particles: usize, cap: usize) -> Result<Vec<Vec<u8>>> {
    let len = n_int + n_bnd;
    let mut out = Vec::new();
    let mut cur = vec![0u8; len];
    fn rec(
        pos: usize,
        left: usize,
        n_int: usize,
        m: u32,
        cur: &mut Vec<u8>,
        out: &mut Vec<Vec<u8>>,
        cap: usize,
    ) -> Result<()> {
        if pos == cur.len() {
            if left == 0 {
                if out.len() == cap {
                    return Err(Error::StateSpaceTooLarge { states: cap + 1, cap });
                }
                out.push(cur.clone());
            }
            return Ok(());
        }
        let max = if pos < n_int { left.min(m as usize) } else { left };
        for k in 0..=max {
            cur[pos] = k as u8;
            rec(pos + 1, left - k, n_int, m, cur, out, cap)?;
        }
        cur[pos] = 0;
        Ok(())
    }
    rec(0, particles, n_int, m, &mut cur, &mut out, cap)?;
    Ok(out)
}

/// Generator of the reservoir process (`Primal`) or of the sink dual
/// (`DualSink`) on `graph`, with rates given by [`crate::sep_process::jump_rate`]'s
/// four cases weighted by each edge's jump probability.
pub fn build_generator(
    graph: &SiteGraph,
    params: &ProcessParams,
    kind: GeneratorKind,
    state_cap: usize,
) -> Result<GeneratorMatrix> {
    let (n, m) = (graph.num_interior(), params.m());
    let states = match kind {
        GeneratorKind::Primal => enumerate_primal(n, m, state_cap)?,
        GeneratorKind::DualSink { particles } => {
            if particles > MAX_DUAL_PARTICLES {
                return Err(invalid(format!(
                    "at most {MAX_DUAL_PARTICLES} dual particles are supported, got {particles}"
                )));
            }
            enumerate_dual(n, graph.num_boundary(), m, particles, state_cap)?
        }
    };
    let index: HashMap<Vec<u8>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mf = m as f64;
    let dual = matches!(kind, GeneratorKind::DualSink { .. });
    let mut rows = Vec::with_capacity(states.len());
    for state in &states {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut push = |target: Vec<u8>, rate: f64| {
            if rate > 0.0 {
                row.push((index[&target], rate));
            }
        };
        for e in &graph.edges {
            let x = e.interior;
            let kx = state[x] as u32;
            match e.other {
                Node::Interior(y) => {
                    let ky = state[y] as u32;
                    for (a, ka, b, kb) in [(x, kx, y, ky), (y, ky, x, kx)] {
                        let rate = e.weight * (ka as f64 / mf) * ((m - kb) as f64 / mf);
                        if rate > 0.0 {
                            let mut t = state.clone();
                            t[a] -= 1;
                            t[b] += 1;
                            push(t, rate);
                        }
                    }
                }
                Node::Boundary(b) => {
                    let alpha = if dual { 0.0 } else { graph.boundary_alpha(params, b) };
                    let out = e.weight * (1.0 - alpha) * kx as f64 / mf;
                    if out > 0.0 {
                        let mut t = state.clone();
                        t[x] -= 1;
                        if dual {
                            t[n + b] += 1;
                        }
                        push(t, out);
                    }
                    let inflow = e.weight * alpha * (m - kx) as f64 / mf;
                    if inflow > 0.0 {
                        let mut t = state.clone();
                        t[x] += 1;
                        push(t, inflow);
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok(GeneratorMatrix { kind, n_interior: n, states, index, rows })
}

/// `exp(t Q) f` by uniformization: the Poisson-weighted series of the
/// jump-chain kernel, in chunks of at most 64 expected jumps, dropping at
/// most [`UNIFORMIZATION_TAIL`] Poisson mass in total.
pub fn propagate(gen: &GeneratorMatrix, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    if f.len() != gen.num_states() {
        return Err(invalid("functional length does not match the state count"));
    }
    let lambda = (0..gen.num_states()).map(|i| gen.exit_rate(i)).fold(0.0, f64::max);
    if t == 0.0 || lambda == 0.0 {
        return Ok(f.to_vec());
    }
    let chunks = (lambda * t / 64.0).ceil().max(1.0);
    let mu = lambda * t / chunks;
    let tol = UNIFORMIZATION_TAIL / chunks;
    let mut u = f.to_vec();
    for _ in 0..chunks as usize {
        let mut v = u.clone();
        let mut w = (-mu).exp();
        let mut acc: Vec<f64> = v.iter().map(|x| w * x).collect();
        let mut k = 0.0;
        loop {
            k += 1.0;
            v = (0..v.len())
                .map(|i| {
                    let vi = v[i];
                    vi + gen.rows[i].iter().map(|&(j, q)| q * (v[j] - vi)).sum::<f64>() / lambda
                })
                .collect();
            w *= mu / k;
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += w * x;
            }
            // remaining mass is at most w_{k+1} / (1 - mu/(k+2)) once k+2 > mu
            if k + 2.0 > mu {
                let next = w * mu / (k + 1.0);
                if next / (1.0 - mu / (k + 2.0)) < tol {
                    break;
                }
            }
        }
        u = acc;
    }
    Ok(u)
}

/// `E[f(X_t) | X_0 = initial]`.
pub fn expectation(gen: &GeneratorMatrix, t: f64, initial: usize, f: &[f64]) -> Result<f64> {
    if initial >= gen.num_states() {
        return Err(invalid("initial state out of range"));
    }
    Ok(propagate(gen, t, f)?[initial])
}

/// Both sides of the duality identity and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Generators reused across many duality checks on one graph.
pub struct DualityChecker<'g> {
    graph: &'g SiteGraph,
    params: ProcessParams,
    primal: GeneratorMatrix,
    duals: Vec<Option<GeneratorMatrix>>,
    state_cap: usize,
}

impl<'g> DualityChecker<'g> {
    pub fn new(graph: &'g SiteGraph, params: ProcessParams, state_cap: usize) -> Result<Self> {
        let primal = build_generator(graph, &params, GeneratorKind::Primal, state_cap)?;
        Ok(Self {
            graph,
            params,
            primal,
            duals: vec![None; MAX_DUAL_PARTICLES + 1],
            state_cap,
        })
    }

    /// `E_s D(s_t, dual)` under the reservoir process against
    /// `E_dual D(s, dual_t)` under the sink dual.
    pub fn check(&mut self, s: &[u32], dual: &DualConfig, t: f64) -> Result<DualityCheck> {
        dual.check_shape(self.graph)?;
        let particles = dual.total() as usize;
        if particles > MAX_DUAL_PARTICLES {
            return Err(invalid(format!("at most {MAX_DUAL_PARTICLES} dual particles are supported")));
        }
        let (graph, params) = (self.graph, self.params);
        let i0 = self
            .primal
            .primal_index(s)
            .ok_or_else(|| invalid("configuration is not a valid primal state"))?;
        let f: Vec<f64> = (0..self.primal.num_states())
            .map(|i| {
                let st: Vec<u32> = self.primal.state(i).iter().map(|&k| k as u32).collect();
                duality_fn(graph, &params, &st, dual)
            })
            .collect::<Result<_>>()?;
        let lhs = expectation(&self.primal, t, i0, &f)?;

        if self.duals[particles].is_none() {
            self.duals[particles] = Some(build_generator(
                graph,
                &params,
                GeneratorKind::DualSink { particles },
                self.state_cap,
            )?);
        }
        let dgen = self.duals[particles].as_ref().expect("built above");
        let j0 = dgen.dual_index(dual).ok_or_else(|| invalid("dual occupancy exceeds m"))?;
        let g: Vec<f64> = (0..dgen.num_states())
            .map(|j| duality_fn(graph, &params, s, &dgen.to_dual(dgen.state(j))))
            .collect::<Result<_>>()?;
        let rhs = expectation(dgen, t, j0, &g)?;
        Ok(DualityCheck { lhs, rhs, gap: (lhs - rhs).abs() })
    }
}

/// One-shot duality check on `graph`.
pub fn check_duality(
    graph: &SiteGraph,
    params: &ProcessParams,
    s: &[u32],
    dual: &DualConfig,
    t: f64,
) -> Result<DualityCheck> {
    DualityChecker::new(graph, *params, DEFAULT_STATE_CAP)?.check(s, dual, t)
}

/// Monte Carlo probability that a single dual particle started at interior
/// site `x` reaches the boundary by time `t`. The walk jumps along each edge
/// at rate `1/(2 d m)`; outer truncation reflects or kills it. Returns the
/// estimate and its binomial standard error.
pub fn dual_absorption_prob(
    domain: &DomainSpec,
    m: u32,
    x: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if x >= domain.num_cells() || domain.class_of(x) != SiteClass::Interior {
        return Err(invalid(format!("site {x} is not interior")));
    }
    if m == 0 {
        return Err(invalid("max occupancy must be at least 1"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    if replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let dirs = domain.num_directions();
    let mut hits = 0usize;
    for rep in 0..replicas {
        let mut rng = replica_rng(seed, rep as u64);
        let (mut site, mut clock) = (x, 0.0);
        loop {
            let e: f64 = rng.sample(Exp1);
            clock += e * m as f64;
            if clock > t {
                break;
            }
            let y = domain.neighbor(site, rng.random_range(0..dirs));
            match domain.class_of(y) {
                SiteClass::Interior => site = y,
                SiteClass::Boundary => {
                    hits += 1;
                    break;
                }
                SiteClass::Outside => {
                    if domain.outer_mode() == OuterMode::Absorbing {
                        break;
                    }
                }
            }
        }
    }
    let n = replicas as f64;
    let p = hits as f64 / n;
    Ok((p, (p * (1.0 - p) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(m: u32, alpha: f64) -> ProcessParams {
        ProcessParams::new(m, alpha).unwrap()
    }

    fn dual(graph: &SiteGraph, interior: &[u32], boundary: &[u32]) -> DualConfig {
        let mut d = DualConfig::empty(graph);
        d.interior.copy_from_slice(interior);
        d.boundary.copy_from_slice(boundary);
        d
    }

    #[test]
    fn duality_fn_examples() {
        let g = SiteGraph::segment(3).unwrap();
        let p = params(3, 0.4);
        let s = [2, 0, 3];
        assert_eq!(duality_fn(&g, &p, &s, &DualConfig::empty(&g)).unwrap(), 1.0);
        let one = dual(&g, &[1, 0, 0], &[0, 0]);
        assert!((duality_fn(&g, &p, &s, &one).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let two = dual(&g, &[0, 2, 0], &[0, 0]);
        assert_eq!(duality_fn(&g, &p, &[1, 1, 1], &two).unwrap(), 0.0);
        let mixed = dual(&g, &[0, 0, 2], &[1, 0]);
        assert!((duality_fn(&g, &p, &s, &mixed).unwrap() - 0.4).abs() < 1e-15);
        let over = dual(&g, &[4, 0, 0], &[0, 0]);
        assert!(duality_fn(&g, &p, &[3, 0, 0], &over).is_err());
    }

    #[test]
    fn four_state_sink_chain() {
        let g = SiteGraph::segment(2).unwrap();
        let gen = build_generator(&g, &params(1, 0.0), GeneratorKind::DualSink { particles: 1 }, 100).unwrap();
        assert_eq!(gen.num_states(), 4);
        let dom = DomainSpec::build(1, 1.0, 2.0, OuterMode::Reflecting).unwrap();
        let g = SiteGraph::from_domain(&dom);
        let gen = build_generator(&g, &params(1, 0.0), GeneratorKind::DualSink { particles: 1 }, 100).unwrap();
        assert_eq!(gen.num_states(), 4);
    }

    #[test]
    fn emission_rate_of_single_site() {
        let g = SiteGraph::segment(1).unwrap();
        let (m, alpha) = (2, 0.3);
        let gen = build_generator(&g, &params(m, alpha), GeneratorKind::Primal, 100).unwrap();
        for k in 0..m {
            let i = gen.primal_index(&[k]).unwrap();
            let j = gen.primal_index(&[k + 1]).unwrap();
            let per_end = 0.5 * alpha * (m - k) as f64 / m as f64;
            assert!((gen.rate(i, j) - 2.0 * per_end).abs() < 1e-15);
        }
    }

    #[test]
    fn generator_rows_sum_to_zero_and_cap_applies() {
        let g = SiteGraph::segment(3).unwrap();
        for kind in [GeneratorKind::Primal, GeneratorKind::DualSink { particles: 2 }] {
            let gen = build_generator(&g, &params(2, 0.7), kind, 1000).unwrap();
            for i in 0..gen.num_states() {
                let sum: f64 = (0..gen.num_states()).map(|j| gen.rate(i, j)).sum();
                assert!(sum.abs() < 1e-12);
                assert!(gen.row(i).iter().all(|e| e.1 >= 0.0));
            }
        }
        let big = SiteGraph::segment(10).unwrap();
        assert!(matches!(
            build_generator(&big, &params(2, 0.5), GeneratorKind::Primal, DEFAULT_STATE_CAP),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn single_particle_dual_generator_is_symmetric() {
        let dom = DomainSpec::build(2, 1.5, 3.5, OuterMode::Reflecting).unwrap();
        let g = SiteGraph::from_domain(&dom);
        let gen = build_generator(&g, &params(2, 0.0), GeneratorKind::DualSink { particles: 1 }, 1000).unwrap();
        let interior: Vec<usize> = (0..gen.num_states())
            .filter(|&i| gen.state(i)[..g.num_interior()].iter().any(|&k| k > 0))
            .collect();
        for &i in &interior {
            for &j in &interior {
                assert!((gen.rate(i, j) - gen.rate(j, i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_state_chain_matches_closed_form() {
        // one site, m = 1, two reservoir ends: 0 -> 1 at rate a, 1 -> 0 at rate b
        let alpha = 0.3;
        let g = SiteGraph::segment(1).unwrap();
        let gen = build_generator(&g, &params(1, alpha), GeneratorKind::Primal, 10).unwrap();
        let (a, b) = (alpha, 1.0 - alpha);
        let f = |i: usize| gen.state(i)[0] as f64;
        let fv: Vec<f64> = (0..2).map(f).collect();
        let i0 = gen.primal_index(&[0]).unwrap();
        for &t in &[0.0, 0.1, 1.0, 5.0, 300.0] {
            let want = a / (a + b) * (1.0 - (-(a + b) * t).exp());
            let got = expectation(&gen, t, i0, &fv).unwrap();
            assert!((got - want).abs() < 1e-10, "t={t}");
        }
        let ones = vec![1.0; 2];
        assert!((expectation(&gen, 7.0, i0, &ones).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duality_holds_on_domain_graph() {
        // one side of a d=1 domain with absorbing truncation: sites 2..3 on each side
        let dom = DomainSpec::build(1, 1.0, 3.0, OuterMode::Absorbing).unwrap();
        let g = SiteGraph::from_domain(&dom);
        let p = params(2, 0.6);
        let mut checker = DualityChecker::new(&g, p, DEFAULT_STATE_CAP).unwrap();
        let s = vec![1, 2, 0, 1];
        let mut d = DualConfig::empty(&g);
        d.interior[0] = 1;
        d.interior[3] = 1;
        for &t in &[0.0, 0.5, 3.0] {
            let c = checker.check(&s, &d, t).unwrap();
            assert!(c.gap < 1e-10, "t={t} {c:?}");
            if t == 0.0 {
                assert_eq!(c.gap, 0.0);
            }
        }
        let c = checker.check(&s, &DualConfig::empty(&g), 2.0).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12 && (c.rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorption_walk_matches_exact_chain() {
        let dom = DomainSpec::build(2, 1.5, 4.0, OuterMode::Reflecting).unwrap();
        let g = SiteGraph::from_domain(&dom);
        let m = 2;
        let gen = build_generator(&g, &params(m, 0.0), GeneratorKind::DualSink { particles: 1 }, 1000).unwrap();
        let f: Vec<f64> = (0..gen.num_states())
            .map(|i| if gen.state(i)[g.num_interior()..].iter().any(|&k| k > 0) { 1.0 } else { 0.0 })
            .collect();
        let x = dom.site_id(&[3, 1]).unwrap();
        let xi = dom.interior_sites().iter().position(|&s| s as usize == x).unwrap();
        let mut start = DualConfig::empty(&g);
        start.interior[xi] = 1;
        let t = 6.0;
        let exact = expectation(&gen, t, gen.dual_index(&start).unwrap(), &f).unwrap();
        let (est, se) = dual_absorption_prob(&dom, m, x, t, 20_000, 4).unwrap();
        assert!((est - exact).abs() < 4.0 * se, "est {est} exact {exact} se {se}");
    }

    #[test]
    fn absorption_walk_edge_cases() {
        let dom = DomainSpec::build(1, 1.0, 6.0, OuterMode::Reflecting).unwrap();
        let x = dom.site_id(&[2]).unwrap();
        assert_eq!(dual_absorption_prob(&dom, 1, x, 0.0, 100, 1).unwrap(), (0.0, 0.0));
        let (p, _) = dual_absorption_prob(&dom, 1, x, 1e4, 500, 1).unwrap();
        assert_eq!(p, 1.0);
        let xm = dom.site_id(&[-4]).unwrap();
        let xp = dom.site_id(&[4]).unwrap();
        let (a, sa) = dual_absorption_prob(&dom, 2, xm, 20.0, 4000, 2).unwrap();
        let (b, sb) = dual_absorption_prob(&dom, 2, xp, 20.0, 4000, 3).unwrap();
        assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt());
        let boundary = dom.site_id(&[1]).unwrap();
        assert!(dual_absorption_prob(&dom, 1, boundary, 1.0, 10, 1).is_err());
    }

    proptest! {
        #[test]
        fn duality_fn_in_unit_interval_and_monotone(
            s in proptest::collection::vec(0u32..=3, 3),
            d0 in proptest::collection::vec(0u32..=3, 3),
            extra in 0usize..5,
            alpha in 0.0f64..=1.0,
        ) {
            let g = SiteGraph::segment(3).unwrap();
            let p = params(3, alpha);
            let base = dual(&g, &d0, &[0, 0]);
            let v = duality_fn(&g, &p, &s, &base).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            let mut more = base.clone();
            if extra < 3 {
                if more.interior[extra] < 3 {
                    more.interior[extra] += 1;
                }
            } else {
                more.boundary[extra - 3] += 1;
            }
            let w = duality_fn(&g, &p, &s, &more).unwrap();
            prop_assert!(w <= v + 1e-15);
        }
    }
}
