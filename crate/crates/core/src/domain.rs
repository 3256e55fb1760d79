//! Lattice exterior of a ball: `Z^d` points with `sqrt(L) < |z| <= r_out`
//! (interior) plus the points with `|z| <= sqrt(L)` that touch the interior
//! (boundary).
//!
//! Sites live in a dense box `[-R, R]^d` with `R = floor(r_out) + 1`, so a
//! site id is its row-major cell index and every neighbour of an interior or
//! boundary site is a valid cell. The extra layer is always `Outside`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Upper limit on the number of cells in the bounding box.
pub const MAX_CELLS: usize = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterMode {
    /// Jumps that would leave `|z| <= r_out` are suppressed.
    #[default]
    Reflecting,
    /// Particles leaving `|z| <= r_out` are removed.
    Absorbing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SiteClass {
    Interior,
    Boundary,
    Outside,
}

const OUTSIDE: u8 = 0;
const INTERIOR: u8 = 1;
const BOUNDARY: u8 = 2;

fn decode_class(c: u8) -> SiteClass {
    match c {
        INTERIOR => SiteClass::Interior,
        BOUNDARY => SiteClass::Boundary,
        _ => SiteClass::Outside,
    }
}

/// Immutable lattice domain; cheap to share across replicas.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    d: usize,
    sqrt_l: f64,
    r_out: f64,
    outer_mode: OuterMode,
    half_width: i64,
    side: usize,
    strides: Vec<usize>,
    class: Vec<u8>,
    interior: Vec<u32>,
    boundary: Vec<u32>,
    boundary_edges: Vec<(u32, u32)>,
}

impl DomainSpec {
    pub fn build(d: usize, sqrt_l: f64, r_out: f64, outer_mode: OuterMode) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(sqrt_l >= 1.0) || !sqrt_l.is_finite() {
            return Err(invalid(format!("inner radius must be >= 1, got {sqrt_l}")));
        }
        if !(r_out > sqrt_l) || !r_out.is_finite() {
            return Err(invalid(format!(
                "outer radius {r_out} must exceed inner radius {sqrt_l}"
            )));
        }
        let half_width = r_out.floor() as i64 + 1;
        let side = (2 * half_width + 1) as usize;
        let cells = (side as f64).powi(d as i32);
        if cells > MAX_CELLS as f64 {
            return Err(invalid(format!(
                "bounding box has {cells:e} cells, above the limit of {MAX_CELLS}"
            )));
        }
        let cells = cells as usize;
        let mut strides = vec![1usize; d];
        for k in 1..d {
            strides[k] = strides[k - 1] * side;
        }

        let mut class = vec![OUTSIDE; cells];
        let mut interior = Vec::new();
        let mut coords = vec![-half_width; d];
        for (cell, slot) in class.iter_mut().enumerate() {
            let n = norm_of(&coords);
            if n > sqrt_l && n <= r_out {
                *slot = INTERIOR;
                interior.push(cell as u32);
            }
            advance(&mut coords, half_width);
        }

        let mut boundary = Vec::new();
        let mut boundary_edges = Vec::new();
        let mut coords = vec![-half_width; d];
        for cell in 0..cells {
            let inside = coords.iter().all(|c| c.abs() < half_width);
            if inside && norm_of(&coords) <= sqrt_l {
                let mut touches = false;
                for k in 0..d {
                    for nb in [cell - strides[k], cell + strides[k]] {
                        if class[nb] == INTERIOR {
                            touches = true;
                            boundary_edges.push((cell as u32, nb as u32));
                        }
                    }
                }
                if touches {
                    boundary.push(cell as u32);
                }
            }
            advance(&mut coords, half_width);
        }
        for &b in &boundary {
            class[b as usize] = BOUNDARY;
        }

        Ok(Self {
            d,
            sqrt_l,
            r_out,
            outer_mode,
            half_width,
            side,
            strides,
            class,
            interior,
            boundary,
            boundary_edges,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sqrt_l(&self) -> f64 {
        self.sqrt_l
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }

    pub fn outer_mode(&self) -> OuterMode {
        self.outer_mode
    }

    /// Total number of cells in the bounding box (valid site ids are below this).
    pub fn num_cells(&self) -> usize {
        self.class.len()
    }

    /// Interior site ids in increasing order.
    pub fn interior_sites(&self) -> &[u32] {
        &self.interior
    }

    /// Boundary site ids in increasing order.
    pub fn boundary_sites(&self) -> &[u32] {
        &self.boundary
    }

    /// Every (boundary site, interior neighbour) pair.
    pub fn boundary_edges(&self) -> &[(u32, u32)] {
        &self.boundary_edges
    }

    pub fn classify(&self, z: &[i64]) -> SiteClass {
        match self.site_id(z) {
            Some(id) => self.class_of(id),
            None => SiteClass::Outside,
        }
    }

    #[inline]
    pub fn class_of(&self, site: usize) -> SiteClass {
        decode_class(self.class[site])
    }

    #[inline]
    pub(crate) fn is_interior(&self, site: usize) -> bool {
        self.class[site] == INTERIOR
    }

    /// Site id of a lattice point, or `None` outside the bounding box.
    pub fn site_id(&self, z: &[i64]) -> Option<usize> {
        if z.len() != self.d {
            return None;
        }
        let mut id = 0usize;
        for (k, &c) in z.iter().enumerate() {
            if c.abs() > self.half_width {
                return None;
            }
            id += (c + self.half_width) as usize * self.strides[k];
        }
        Some(id)
    }

    pub fn coords(&self, site: usize) -> Vec<i64> {
        let mut rest = site;
        (0..self.d)
            .map(|_| {
                let c = (rest % self.side) as i64 - self.half_width;
                rest /= self.side;
                c
            })
            .collect()
    }

    /// Squared Euclidean norm of a site, without allocating.
    #[inline]
    pub fn norm_sq(&self, site: usize) -> i64 {
        let mut rest = site;
        let mut acc = 0;
        for _ in 0..self.d {
            let c = (rest % self.side) as i64 - self.half_width;
            rest /= self.side;
            acc += c * c;
        }
        acc
    }

    #[inline]
    pub fn norm(&self, site: usize) -> f64 {
        (self.norm_sq(site) as f64).sqrt()
    }

    /// Neighbour in direction `dir in 0..2d`: `dir = 2k` steps `-e_k`,
    /// `dir = 2k + 1` steps `+e_k`. Valid for interior and boundary sites.
    #[inline]
    pub fn neighbor(&self, site: usize, dir: usize) -> usize {
        let stride = self.strides[dir >> 1];
        if dir & 1 == 0 {
            site - stride
        } else {
            site + stride
        }
    }

    /// Number of lattice directions, `2d`.
    pub fn num_directions(&self) -> usize {
        2 * self.d
    }
}

fn norm_of(z: &[i64]) -> f64 {
    (z.iter().map(|c| c * c).sum::<i64>() as f64).sqrt()
}

fn advance(coords: &mut [i64], half_width: i64) {
    for c in coords.iter_mut() {
        if *c < half_width {
            *c += 1;
            return;
        }
        *c = -half_width;
    }
}
