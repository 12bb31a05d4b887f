//! Lost-in-space identification: unique triangle search, reference-star
//! confirmation, then identification of the remaining observations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::{arcsec, UnitVec3};
use crate::catalog::{PairEntry, StarDatabase, StarIndex};

/// Observed star directions in the camera frame at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub time: f64,
    pub observations: Vec<UnitVec3>,
}

impl Frame {
    pub fn new(time: f64, observations: Vec<UnitVec3>) -> Self {
        Self { time, observations }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assignment {
    Star(StarIndex),
    /// Observation rejected as a false star.
    Spike,
    Unidentified,
}

impl Assignment {
    pub fn star(&self) -> Option<StarIndex> {
        match self {
            Assignment::Star(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMethod {
    Pyramid,
    Recursive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdResult {
    pub ids: Vec<Assignment>,
    pub n_identified: usize,
    pub method: IdMethod,
}

impl IdResult {
    pub(crate) fn from_ids(ids: Vec<Assignment>, method: IdMethod) -> Self {
        let n_identified = ids.iter().filter(|a| a.star().is_some()).count();
        Self {
            ids,
            n_identified,
            method,
        }
    }

    /// `(observation index, star)` for every identified observation.
    pub fn identified(&self) -> impl Iterator<Item = (usize, StarIndex)> + '_ {
        self.ids
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.star().map(|s| (i, s)))
    }

    pub fn n_spikes(&self) -> usize {
        self.ids.iter().filter(|a| **a == Assignment::Spike).count()
    }

    pub fn catalog_ids(&self, db: &StarDatabase) -> Vec<Option<u32>> {
        self.ids
            .iter()
            .map(|a| a.star().map(|s| db.star(s).catalog_id))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    /// `i < j < k` in nested lexicographic order.
    Lexicographic,
    /// Spread index gaps first so one bad observation does not stall the scan.
    Smart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PyramidConfig {
    /// Half-width of each inter-star angle query, radians.
    pub tolerance: f64,
    pub scan: ScanOrder,
    /// Reject catalog triangles whose orientation is mirrored.
    pub check_handedness: bool,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            tolerance: arcsec(10.0),
            scan: ScanOrder::Lexicographic,
            check_handedness: true,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PyramidFailure {
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("no unique triangle with a confirming reference star")]
    NoPyramid,
}

/// An observation triangle with the single catalog triple consistent with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub obs: [usize; 3],
    pub stars: [StarIndex; 3],
}

impl Triangle {
    fn base(&self) -> [(usize, StarIndex); 3] {
        [
            (self.obs[0], self.stars[0]),
            (self.obs[1], self.stars[1]),
            (self.obs[2], self.stars[2]),
        ]
    }
}

enum TriangleMatch {
    None,
    Unique([StarIndex; 3]),
    Ambiguous,
}

const HANDEDNESS_MIN: f64 = 1e-6;

fn triple(a: &UnitVec3, b: &UnitVec3, c: &UnitVec3) -> f64 {
    a.as_vector().dot(&b.as_vector().cross(c.as_vector()))
}

/// Per-frame matcher; caches the catalog candidates of each observed pair.
pub(crate) struct Matcher<'a> {
    db: &'a StarDatabase,
    obs: &'a [UnitVec3],
    cfg: &'a PyramidConfig,
    cache: Vec<Option<&'a [PairEntry]>>,
}

impl<'a> Matcher<'a> {
    pub(crate) fn new(db: &'a StarDatabase, obs: &'a [UnitVec3], cfg: &'a PyramidConfig) -> Self {
        Self {
            db,
            obs,
            cfg,
            cache: Vec::new(),
        }
    }

    fn pairs(&mut self, i: usize, j: usize) -> &'a [PairEntry] {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.obs.len();
        if self.cache.is_empty() {
            self.cache = vec![None; n * n];
        }
        if let Some(p) = self.cache[i * n + j] {
            return p;
        }
        let c = self.obs[i].dot(&self.obs[j]);
        let p = self.db.pairs_near(c, self.cfg.tolerance);
        self.cache[i * n + j] = Some(p);
        p
    }

    fn handed(&self, obs: [usize; 3], stars: [StarIndex; 3]) -> bool {
        if !self.cfg.check_handedness {
            return true;
        }
        let t_obs = triple(&self.obs[obs[0]], &self.obs[obs[1]], &self.obs[obs[2]]);
        if t_obs.abs() < HANDEDNESS_MIN {
            return true;
        }
        let t_cat = triple(
            self.db.direction(stars[0]),
            self.db.direction(stars[1]),
            self.db.direction(stars[2]),
        );
        t_obs.signum() == t_cat.signum()
    }

    fn match_triangle(&mut self, i: usize, j: usize, k: usize) -> TriangleMatch {
        let pij = self.pairs(i, j);
        if pij.is_empty() {
            return TriangleMatch::None;
        }
        let pik = self.pairs(i, k);
        if pik.is_empty() {
            return TriangleMatch::None;
        }
        let pjk = self.pairs(j, k);
        if pjk.is_empty() {
            return TriangleMatch::None;
        }
        let mut found: Option<[StarIndex; 3]> = None;
        for e in pij {
            for (si, sj) in [(e.a, e.b), (e.b, e.a)] {
                for f in pik {
                    let Some(sk) = f.partner(si) else { continue };
                    if sk == sj || !pjk.iter().any(|g| g.joins(sj, sk)) {
                        continue;
                    }
                    let stars = [si, sj, sk];
                    if !self.handed([i, j, k], stars) {
                        continue;
                    }
                    match found {
                        Some(prev) if prev != stars => return TriangleMatch::Ambiguous,
                        _ => found = Some(stars),
                    }
                }
            }
        }
        match found {
            Some(s) => TriangleMatch::Unique(s),
            None => TriangleMatch::None,
        }
    }

    /// The single catalog star consistent with observation `s` given three
    /// identified base observations, or `None` if zero or several fit.
    pub(crate) fn match_extension(&mut self, base: &[(usize, StarIndex); 3], s: usize) -> Option<StarIndex> {
        let p0 = self.pairs(base[0].0, s);
        if p0.is_empty() {
            return None;
        }
        let p1 = self.pairs(base[1].0, s);
        if p1.is_empty() {
            return None;
        }
        let p2 = self.pairs(base[2].0, s);
        if p2.is_empty() {
            return None;
        }
        let mut found: Option<StarIndex> = None;
        for e in p0 {
            let Some(r) = e.partner(base[0].1) else { continue };
            if r == base[1].1 || r == base[2].1 {
                continue;
            }
            if !p1.iter().any(|g| g.joins(base[1].1, r)) || !p2.iter().any(|g| g.joins(base[2].1, r)) {
                continue;
            }
            if !self.handed([base[0].0, base[1].0, s], [base[0].1, base[1].1, r]) {
                continue;
            }
            match found {
                Some(prev) if prev != r => return None,
                _ => found = Some(r),
            }
        }
        found
    }

    fn first_unique_triangle(&mut self) -> Option<Triangle> {
        let n = self.obs.len();
        let mut hit = None;
        for_each_triple(n, self.cfg.scan, |i, j, k| {
            if let TriangleMatch::Unique(stars) = self.match_triangle(i, j, k) {
                hit = Some(Triangle {
                    obs: [i, j, k],
                    stars,
                });
                return true;
            }
            false
        });
        hit
    }

    fn reference_star(&mut self, tri: &Triangle) -> Option<(usize, StarIndex)> {
        let base = tri.base();
        (0..self.obs.len())
            .filter(|r| !tri.obs.contains(r))
            .find_map(|r| self.match_extension(&base, r).map(|s| (r, s)))
    }

    /// Identifies every observation outside `fixed` against the base triple.
    /// Observations that do not resolve uniquely, or that collide with another
    /// assignment, are marked as spikes.
    pub(crate) fn extend(
        &mut self,
        base: &[(usize, StarIndex); 3],
        fixed: &[(usize, StarIndex)],
        method: IdMethod,
    ) -> IdResult {
        let n = self.obs.len();
        let mut ids = vec![Assignment::Spike; n];
        for &(o, s) in fixed {
            ids[o] = Assignment::Star(s);
        }
        let mut fresh: Vec<(usize, StarIndex)> = Vec::new();
        for s in 0..n {
            if ids[s] != Assignment::Spike {
                continue;
            }
            if let Some(r) = self.match_extension(base, s) {
                fresh.push((s, r));
            }
        }
        for &(o, r) in &fresh {
            let clash_fixed = fixed.iter().any(|&(_, f)| f == r);
            let clash_fresh = fresh.iter().filter(|&&(_, q)| q == r).count() > 1;
            if !clash_fixed && !clash_fresh {
                ids[o] = Assignment::Star(r);
            }
        }
        IdResult::from_ids(ids, method)
    }
}

/// Visits index triples in the configured order until `f` returns true.
fn for_each_triple(n: usize, order: ScanOrder, mut f: impl FnMut(usize, usize, usize) -> bool) {
    if n < 3 {
        return;
    }
    match order {
        ScanOrder::Lexicographic => {
            for i in 0..n - 2 {
                for j in i + 1..n - 1 {
                    for k in j + 1..n {
                        if f(i, j, k) {
                            return;
                        }
                    }
                }
            }
        }
        ScanOrder::Smart => {
            for dj in 1..n - 1 {
                for dk in 1..n - dj {
                    for i in 0..n - dj - dk {
                        if f(i, i + dj, i + dj + dk) {
                            return;
                        }
                    }
                }
            }
        }
    }
}

pub fn find_unique_triangle(frame: &Frame, db: &StarDatabase, cfg: &PyramidConfig) -> Option<Triangle> {
    if frame.len() < 3 {
        return None;
    }
    Matcher::new(db, &frame.observations, cfg).first_unique_triangle()
}

pub fn find_reference_star(
    frame: &Frame,
    triangle: &Triangle,
    db: &StarDatabase,
    cfg: &PyramidConfig,
) -> Option<(usize, StarIndex)> {
    Matcher::new(db, &frame.observations, cfg).reference_star(triangle)
}

/// Identifies the remaining observations once four stars are confirmed.
/// The first three entries of `confirmed` act as the base triangle.
pub fn identify_remaining(
    frame: &Frame,
    confirmed: &[(usize, StarIndex); 4],
    db: &StarDatabase,
    cfg: &PyramidConfig,
) -> IdResult {
    let base = [confirmed[0], confirmed[1], confirmed[2]];
    Matcher::new(db, &frame.observations, cfg).extend(&base, confirmed, IdMethod::Pyramid)
}

pub fn pyramid_identify(frame: &Frame, db: &StarDatabase, cfg: &PyramidConfig) -> Result<IdResult, PyramidFailure> {
    let n = frame.len();
    if n < 3 {
        return Err(PyramidFailure::TooFewObservations(n));
    }
    let mut m = Matcher::new(db, &frame.observations, cfg);
    let mut result = None;
    for_each_triple(n, cfg.scan, |i, j, k| {
        let TriangleMatch::Unique(stars) = m.match_triangle(i, j, k) else {
            return false;
        };
        let tri = Triangle {
            obs: [i, j, k],
            stars,
        };
        match m.reference_star(&tri) {
            Some(r) => {
                let base = tri.base();
                let confirmed = [base[0], base[1], base[2], r];
                result = Some(m.extend(&base, &confirmed, IdMethod::Pyramid));
                true
            }
            None => false,
        }
    });
    result.ok_or(PyramidFailure::NoPyramid)
}
