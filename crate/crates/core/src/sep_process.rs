//! Open SEP(m/2) on a [`DomainSpec`]: jump rates, exact event simulation,
//! and the density-profile and height-function estimators.
//!
//! The simulator realises the generator by thinning. Every interior particle
//! proposes a move at rate `1/m` to a uniformly chosen neighbour, and every
//! (boundary, interior) edge proposes an emission at rate `alpha/(2d)`. A
//! proposal is accepted with probability `rate / bound`:
//!
//! | move                  | accepted with     |
//! |-----------------------|-------------------|
//! | interior -> interior  | `(m - k_y)/m`     |
//! | interior -> boundary  | `1 - alpha`       |
//! | boundary -> interior  | `(m - k_y)/m`     |
//! | interior -> outside   | 0 (reflecting), 1 (absorbing) |
//!
//! so the accepted moves form exactly the continuous-time chain with the
//! four-case rates of [`jump_rate`]. The incremental state is the particle
//! list plus a per-cell byte array holding the occupancy of interior cells
//! and a class marker elsewhere, so a proposal touches one array;
//! [`Configuration::check_consistency`] recomputes one from the other.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::domain::{DomainSpec, OuterMode, SiteClass};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryKind {
    /// `alpha > 0`: boundary sites are infinite particle reservoirs.
    Reservoir,
    /// `alpha = 0`: boundary sites absorb and never emit.
    Sink,
}

/// Maximum occupancy `m` and uniform boundary parameter `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessParams {
    m: u32,
    alpha: f64,
}

impl ProcessParams {
    pub fn new(m: u32, alpha: f64) -> Result<Self> {
        if m == 0 || m > MAX_OCCUPANCY {
            return Err(invalid(format!(
                "max occupancy must be in 1..={MAX_OCCUPANCY}, got {m}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("alpha must be in [0, 1], got {alpha}")));
        }
        Ok(Self { m, alpha })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn boundary_kind(&self) -> BoundaryKind {
        if self.alpha == 0.0 {
            BoundaryKind::Sink
        } else {
            BoundaryKind::Reservoir
        }
    }
}

/// Largest supported `m`; the two byte values above it mark non-interior cells.
pub const MAX_OCCUPANCY: u32 = 253;
const BOUNDARY_CELL: u8 = 254;
const OUTSIDE_CELL: u8 = 255;

/// One end of a nearest-neighbour jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Interior(u32),
    Boundary,
}

/// Rate of a single particle jump from `from` to `to` in dimension `d`.
pub fn jump_rate(params: &ProcessParams, d: usize, from: Endpoint, to: Endpoint) -> Result<f64> {
    let m = params.m;
    for e in [from, to] {
        if let Endpoint::Interior(k) = e {
            if k > m {
                return Err(invalid(format!("occupancy {k} exceeds m = {m}")));
            }
        }
    }
    let p = 1.0 / (2.0 * d as f64);
    let mf = m as f64;
    Ok(match (from, to) {
        (Endpoint::Boundary, Endpoint::Interior(ky)) => p * params.alpha * (m - ky) as f64 / mf,
        (Endpoint::Interior(kx), Endpoint::Boundary) => p * (1.0 - params.alpha) * kx as f64 / mf,
        (Endpoint::Interior(kx), Endpoint::Interior(ky)) => {
            p * (kx as f64 / mf) * ((m - ky) as f64 / mf)
        }
        (Endpoint::Boundary, Endpoint::Boundary) => 0.0,
    })
}

/// Occupancies, sink counters and process clock of one replica.
#[derive(Debug, Clone)]
pub struct Configuration {
    occupancy: Vec<u8>,
    particles: Vec<u32>,
    absorbed: BTreeMap<u32, u64>,
    exited: u64,
    time: f64,
}

impl Configuration {
    /// All-empty configuration at time 0.
    pub fn empty(domain: &DomainSpec) -> Self {
        Self {
            occupancy: (0..domain.num_cells())
                .map(|s| match domain.class_of(s) {
                    SiteClass::Interior => 0,
                    SiteClass::Boundary => BOUNDARY_CELL,
                    SiteClass::Outside => OUTSIDE_CELL,
                })
                .collect(),
            particles: Vec::new(),
            absorbed: BTreeMap::new(),
            exited: 0,
            time: 0.0,
        }
    }

    /// Builds a configuration from explicit interior occupancies.
    pub fn from_occupancies(
        domain: &DomainSpec,
        params: &ProcessParams,
        occupied: &[(usize, u32)],
    ) -> Result<Self> {
        let mut cfg = Self::empty(domain);
        for &(site, k) in occupied {
            if site >= domain.num_cells() || domain.class_of(site) != SiteClass::Interior {
                return Err(invalid(format!("site {site} is not interior")));
            }
            let total = cfg.occupancy[site] as u32 + k;
            if total > params.m {
                return Err(invalid(format!("occupancy {total} at site {site} exceeds m")));
            }
            cfg.occupancy[site] = total as u8;
            cfg.particles.extend(std::iter::repeat(site as u32).take(k as usize));
        }
        Ok(cfg)
    }

    /// Particles at `site`; 0 for non-interior sites.
    pub fn occupancy(&self, site: usize) -> u32 {
        match self.occupancy[site] {
            BOUNDARY_CELL | OUTSIDE_CELL => 0,
            k => k as u32,
        }
    }

    /// Site of every interior particle (a site with `k` particles appears `k` times).
    pub fn particle_sites(&self) -> &[u32] {
        &self.particles
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    /// Particles trapped at each sink site (sink mode only).
    pub fn absorbed(&self) -> &BTreeMap<u32, u64> {
        &self.absorbed
    }

    /// Particles that left through an absorbing outer truncation.
    pub fn exited(&self) -> u64 {
        self.exited
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Recomputes the occupancy array from the particle list and compares.
    pub fn check_consistency(&self, domain: &DomainSpec, params: &ProcessParams) -> bool {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for &s in &self.particles {
            if !domain.is_interior(s as usize) {
                return false;
            }
            *counts.entry(s).or_default() += 1;
        }
        let from_list_ok = counts
            .iter()
            .all(|(&s, &k)| k <= params.m && self.occupancy[s as usize] as u32 == k);
        let total: u64 = (0..self.occupancy.len()).map(|s| self.occupancy(s) as u64).sum();
        from_list_ok && total == self.particles.len() as u64
    }
}

/// What an accepted event did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpEvent {
    Hop { from: u32, to: u32 },
    Emit { from: u32, to: u32 },
    Absorb { from: u32, to: u32 },
    Exit { from: u32 },
}

/// RNG stream for replica `index` under `master_seed`.
pub fn replica_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Exact simulator for one replica.
pub struct Simulator<'a> {
    domain: &'a DomainSpec,
    params: ProcessParams,
    config: Configuration,
    rng: ChaCha8Rng,
    inv_m: f64,
    emission_bound: f64,
}

/// Consecutive rejections after which `step` checks for a frozen state.
const FROZEN_CHECK_AFTER: usize = 256;

enum Proposal {
    Rejected,
    Accepted(JumpEvent),
}

impl<'a> Simulator<'a> {
    pub fn new(domain: &'a DomainSpec, params: ProcessParams, rng: ChaCha8Rng) -> Self {
        Self::with_config(domain, params, Configuration::empty(domain), rng)
    }

    pub fn with_config(
        domain: &'a DomainSpec,
        params: ProcessParams,
        config: Configuration,
        rng: ChaCha8Rng,
    ) -> Self {
        let p = 1.0 / domain.num_directions() as f64;
        let emission_bound = p * params.alpha * domain.boundary_edges().len() as f64;
        Self {
            domain,
            params,
            config,
            rng,
            inv_m: 1.0 / params.m as f64,
            emission_bound,
        }
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn time(&self) -> f64 {
        self.config.time
    }

    fn proposal_rate(&self) -> f64 {
        self.config.particles.len() as f64 * self.inv_m + self.emission_bound
    }

    /// Sum of all jump rates in the current configuration, from scratch.
    pub fn exact_total_rate(&self) -> f64 {
        let d = self.domain.dim();
        let mut total = 0.0;
        let mut seen = std::collections::HashSet::new();
        for &x in &self.config.particles {
            if !seen.insert(x) {
                continue;
            }
            let kx = self.config.occupancy[x as usize] as u32;
            for dir in 0..2 * d {
                let y = self.domain.neighbor(x as usize, dir);
                let to = match self.domain.class_of(y) {
                    SiteClass::Interior => Endpoint::Interior(self.config.occupancy[y] as u32),
                    SiteClass::Boundary => Endpoint::Boundary,
                    SiteClass::Outside => {
                        if self.domain.outer_mode() == OuterMode::Absorbing {
                            total += kx as f64 * self.inv_m / (2 * d) as f64;
                        }
                        continue;
                    }
                };
                total += jump_rate(&self.params, d, Endpoint::Interior(kx), to).expect("valid");
            }
        }
        for &(_, y) in self.domain.boundary_edges() {
            let ky = self.config.occupancy[y as usize] as u32;
            total += jump_rate(&self.params, d, Endpoint::Boundary, Endpoint::Interior(ky))
                .expect("valid");
        }
        total
    }

    fn accept_fraction(&mut self, free: u32) -> bool {
        let m = self.params.m;
        if free == m {
            true
        } else if free == 0 {
            false
        } else {
            self.rng.random_range(0..m) < free
        }
    }

    fn propose(&mut self) -> Proposal {
        let n = self.config.particles.len();
        let u = self.rng.random::<f64>() * self.proposal_rate();
        let particle_part = n as f64 * self.inv_m;
        if u < particle_part {
            let i = ((u / particle_part) * n as f64) as usize;
            let i = i.min(n - 1);
            let x = self.config.particles[i] as usize;
            let dir = self.rng.random_range(0..self.domain.num_directions());
            let y = self.domain.neighbor(x, dir);
            match self.config.occupancy[y] {
                BOUNDARY_CELL => {
                    let alpha = self.params.alpha;
                    let accept = alpha == 0.0 || (alpha < 1.0 && self.rng.random::<f64>() >= alpha);
                    if !accept {
                        return Proposal::Rejected;
                    }
                    self.remove_particle(i);
                    if self.params.boundary_kind() == BoundaryKind::Sink {
                        *self.config.absorbed.entry(y as u32).or_default() += 1;
                    }
                    Proposal::Accepted(JumpEvent::Absorb {
                        from: x as u32,
                        to: y as u32,
                    })
                }
                OUTSIDE_CELL => match self.domain.outer_mode() {
                    OuterMode::Reflecting => Proposal::Rejected,
                    OuterMode::Absorbing => {
                        self.remove_particle(i);
                        self.config.exited += 1;
                        Proposal::Accepted(JumpEvent::Exit { from: x as u32 })
                    }
                },
                ky => {
                    if !self.accept_fraction(self.params.m - ky as u32) {
                        return Proposal::Rejected;
                    }
                    self.config.occupancy[x] -= 1;
                    self.config.occupancy[y] += 1;
                    self.config.particles[i] = y as u32;
                    Proposal::Accepted(JumpEvent::Hop {
                        from: x as u32,
                        to: y as u32,
                    })
                }
            }
        } else {
            let edges = self.domain.boundary_edges();
            let e = self.rng.random_range(0..edges.len());
            let (b, y) = edges[e];
            let free = self.params.m - self.config.occupancy[y as usize] as u32;
            if !self.accept_fraction(free) {
                return Proposal::Rejected;
            }
            self.config.occupancy[y as usize] += 1;
            self.config.particles.push(y);
            Proposal::Accepted(JumpEvent::Emit { from: b, to: y })
        }
    }

    fn remove_particle(&mut self, i: usize) {
        let x = self.config.particles.swap_remove(i);
        self.config.occupancy[x as usize] -= 1;
    }

    fn exp_sample(&mut self, rate: f64) -> f64 {
        let e: f64 = self.rng.sample(Exp1);
        e / rate
    }

    /// Advances to the next accepted event. Returns the event and the
    /// elapsed time, which is exponential with the total jump rate.
    pub fn step(&mut self) -> Result<(JumpEvent, f64)> {
        let mut waited = 0.0;
        let mut rejections = 0usize;
        loop {
            let rate = self.proposal_rate();
            if rate == 0.0 {
                return Err(Error::Frozen);
            }
            waited += self.exp_sample(rate);
            match self.propose() {
                Proposal::Accepted(ev) => {
                    self.config.time += waited;
                    return Ok((ev, waited));
                }
                Proposal::Rejected => {
                    rejections += 1;
                    if rejections % FROZEN_CHECK_AFTER == 0 && self.exact_total_rate() == 0.0 {
                        return Err(Error::Frozen);
                    }
                }
            }
        }
    }

    /// Runs the chain until the clock reaches `t_end` (no-op if already past).
    pub fn advance_to(&mut self, t_end: f64) {
        loop {
            let rate = self.proposal_rate();
            if rate == 0.0 {
                break;
            }
            let dt = self.exp_sample(rate);
            if self.config.time + dt > t_end {
                break;
            }
            self.config.time += dt;
            self.propose();
        }
        if t_end > self.config.time {
            self.config.time = t_end;
        }
    }
}

/// Simulates one replica from the empty configuration up to `t_end`.
/// A frozen chain just has its clock moved forward.
pub fn run_replica(
    domain: &DomainSpec,
    params: &ProcessParams,
    t_end: f64,
    seed: u64,
) -> Result<Configuration> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(invalid(format!("end time must be >= 0, got {t_end}")));
    }
    let mut sim = Simulator::new(domain, *params, replica_rng(seed, 0));
    sim.advance_to(t_end);
    debug_assert!(sim.config.check_consistency(domain, params));
    Ok(sim.into_config())
}

/// Process time for macroscopic time `tau`: `time_scale * tau * L`, with
/// `time_scale` defaulting to `2 d m`.
pub fn map_time(tau: f64, l: f64, d: usize, m: u32, time_scale: Option<f64>) -> f64 {
    let scale = time_scale.unwrap_or(2.0 * d as f64 * m as f64);
    scale * tau * l
}

/// Total particle count at interior sites with `|y| >= r`.
pub fn height_function(domain: &DomainSpec, config: &Configuration, r: f64) -> u64 {
    config
        .particles
        .iter()
        .filter(|&&s| domain.norm(s as usize) >= r)
        .count() as u64
}

/// Radial shells of width `bin_width` starting at `sqrt(L)`.
#[derive(Debug, Clone)]
pub struct RadialBins {
    inner: f64,
    width: f64,
    sites: Vec<u64>,
}

impl RadialBins {
    pub fn new(domain: &DomainSpec, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(invalid(format!("bin width must be positive, got {width}")));
        }
        let inner = domain.sqrt_l();
        let count = ((domain.r_out() - inner) / width).ceil() as usize + 1;
        let mut sites = vec![0u64; count];
        for &x in domain.interior_sites() {
            let b = Self::index_for(inner, width, domain.norm(x as usize));
            sites[b.min(count - 1)] += 1;
        }
        Ok(Self { inner, width, sites })
    }

    fn index_for(inner: f64, width: f64, norm: f64) -> usize {
        ((norm - inner) / width).floor().max(0.0) as usize
    }

    pub fn bin_of(&self, norm: f64) -> usize {
        Self::index_for(self.inner, self.width, norm).min(self.sites.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        self.inner + (bin as f64 + 0.5) * self.width
    }

    pub fn sites_in(&self, bin: usize) -> u64 {
        self.sites[bin]
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Per-bin mean of `occupancy / m` for one configuration.
    pub fn bin_means(&self, domain: &DomainSpec, params: &ProcessParams, config: &Configuration) -> Vec<f64> {
        let mut sums = vec![0u64; self.sites.len()];
        for &s in config.particle_sites() {
            sums[self.bin_of(domain.norm(s as usize))] += 1;
        }
        let m = params.m() as f64;
        sums.iter()
            .zip(&self.sites)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s as f64 / (m * n as f64) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityBin {
    pub radial_midpoint: f64,
    pub mean: f64,
    pub stderr: f64,
    pub sites: u64,
}

/// Radially binned Monte Carlo density with standard errors over replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub bins: Vec<DensityBin>,
    pub replicas: usize,
    pub process_time: f64,
}

/// Streaming mean/variance of per-replica bin means.
#[derive(Debug, Clone)]
pub struct DensityAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    replicas: usize,
}

impl DensityAccumulator {
    pub fn new(bins: usize) -> Self {
        Self {
            sum: vec![0.0; bins],
            sum_sq: vec![0.0; bins],
            replicas: 0,
        }
    }

    pub fn push(&mut self, means: &[f64]) {
        for (i, &v) in means.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.replicas += 1;
    }

    pub fn finish(&self, bins: &RadialBins, process_time: f64) -> Result<DensityEstimate> {
        if self.replicas == 0 {
            return Err(invalid("density estimate needs at least one replica"));
        }
        let n = self.replicas as f64;
        let out = (0..bins.len())
            .filter(|&b| bins.sites_in(b) > 0)
            .map(|b| {
                let mean = self.sum[b] / n;
                let var = if self.replicas > 1 {
                    ((self.sum_sq[b] - n * mean * mean) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                DensityBin {
                    radial_midpoint: bins.midpoint(b),
                    mean,
                    stderr: (var / n).sqrt(),
                    sites: bins.sites_in(b),
                }
            })
            .collect();
        Ok(DensityEstimate {
            bins: out,
            replicas: self.replicas,
            process_time,
        })
    }
}

/// Density profile over replicas sharing one domain, parameter set and time.
pub fn density_profile(
    domain: &DomainSpec,
    params: &ProcessParams,
    replicas: &[Configuration],
    bin_width: f64,
) -> Result<DensityEstimate> {
    let first = replicas
        .first()
        .ok_or_else(|| invalid("density estimate needs at least one replica"))?;
    let bins = RadialBins::new(domain, bin_width)?;
    let mut acc = DensityAccumulator::new(bins.len());
    for cfg in replicas {
        acc.push(&bins.bin_means(domain, params, cfg));
    }
    acc.finish(&bins, first.time())
}
