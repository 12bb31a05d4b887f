//! Star catalog ingestion, the admissible-pair database and k-vector range
//! searching over inter-star angles.
//!
//! Catalog files are CSV with header `id,ra_deg,dec_deg,vmag`. Pairs are
//! stored by the cosine of their separation, sorted ascending, so a range
//! query never needs trigonometry on the hot path.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attitude::UnitVec3;

/// Hipparcos-derived catalog (stars brighter than V = 6) shipped with the crate.
pub const BUNDLED_CATALOG_CSV: &str = include_str!("../data/hipparcos_v6.csv");

const DB_MAGIC: &[u8; 4] = b"SPDB";
const DB_VERSION: u32 = 1;

/// Extra separation beyond the FOV diagonal kept in the pair database, radians.
pub const DEFAULT_PAIR_MARGIN: f64 = 0.5 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("no stars brighter than magnitude {threshold}")]
    Empty { threshold: f64 },
    #[error("duplicate catalog id {0}")]
    DuplicateId(u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad pair database file: {0}")]
    BadDatabase(String),
}

/// Index of a star in the loaded catalog (not the catalog id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StarIndex(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Star {
    pub catalog_id: u32,
    pub direction: UnitVec3,
    pub magnitude: f64,
}

#[derive(Debug, Deserialize)]
struct CatalogRecord {
    id: u32,
    ra_deg: f64,
    dec_deg: f64,
    vmag: f64,
}

/// Reads catalog records and keeps stars strictly fainter-than-excluded:
/// only `vmag < magnitude_threshold` survives.
pub fn load_catalog<R: Read>(source: R, magnitude_threshold: f64) -> Result<Vec<Star>, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut stars = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.deserialize::<CatalogRecord>() {
        let rec = rec.map_err(|e| CatalogError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !(rec.ra_deg.is_finite() && rec.dec_deg.is_finite() && rec.vmag.is_finite()) {
            return Err(CatalogError::Parse {
                line: rdr.position().line(),
                message: "non-finite field".into(),
            });
        }
        if !seen.insert(rec.id) {
            return Err(CatalogError::DuplicateId(rec.id));
        }
        if rec.vmag < magnitude_threshold {
            stars.push(Star {
                catalog_id: rec.id,
                direction: UnitVec3::from_ra_dec(rec.ra_deg.to_radians(), rec.dec_deg.to_radians()),
                magnitude: rec.vmag,
            });
        }
    }
    if stars.is_empty() {
        return Err(CatalogError::Empty {
            threshold: magnitude_threshold,
        });
    }
    Ok(stars)
}

pub fn load_catalog_file<P: AsRef<Path>>(
    path: P,
    magnitude_threshold: f64,
) -> Result<Vec<Star>, CatalogError> {
    load_catalog(BufReader::new(File::open(path)?), magnitude_threshold)
}

/// Opens `path` as a binary pair database if it carries the database magic,
/// otherwise as a CSV catalog from which the database is built. `None` builds
/// from the bundled catalog.
pub fn open_database(
    path: Option<&Path>,
    magnitude_threshold: f64,
    fov_diagonal: f64,
) -> Result<StarDatabase, CatalogError> {
    let stars = match path {
        None => bundled_catalog(magnitude_threshold)?,
        Some(p) => {
            let mut head = [0u8; 4];
            let is_binary = std::fs::File::open(p)?.read(&mut head)? == 4 && &head == DB_MAGIC;
            if is_binary {
                return StarDatabase::load_binary(std::fs::File::open(p)?);
            }
            load_catalog_file(p, magnitude_threshold)?
        }
    };
    Ok(StarDatabase::build(stars, fov_diagonal, DEFAULT_PAIR_MARGIN))
}

pub fn bundled_catalog(magnitude_threshold: f64) -> Result<Vec<Star>, CatalogError> {
    load_catalog(BUNDLED_CATALOG_CSV.as_bytes(), magnitude_threshold)
}

/// One admissible pair; `a < b` are star indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEntry {
    pub cos_angle: f64,
    pub a: StarIndex,
    pub b: StarIndex,
}

impl PairEntry {
    /// The partner of `s` in this pair, if `s` belongs to it.
    #[inline]
    pub fn partner(&self, s: StarIndex) -> Option<StarIndex> {
        if self.a == s {
            Some(self.b)
        } else if self.b == s {
            Some(self.a)
        } else {
            None
        }
    }

    #[inline]
    pub fn joins(&self, s: StarIndex, t: StarIndex) -> bool {
        (self.a == s && self.b == t) || (self.a == t && self.b == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDatabase {
    entries: Vec<PairEntry>,
    max_pair_angle: f64,
}

impl PairDatabase {
    pub fn entries(&self) -> &[PairEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_pair_angle(&self) -> f64 {
        self.max_pair_angle
    }

    /// Entries with `cos_lo <= cos_angle <= cos_hi` by plain scan.
    pub fn linear_range(&self, cos_lo: f64, cos_hi: f64) -> &[PairEntry] {
        let start = self.entries.partition_point(|e| e.cos_angle < cos_lo);
        let end = self.entries.partition_point(|e| e.cos_angle <= cos_hi);
        if start >= end {
            &[]
        } else {
            &self.entries[start..end]
        }
    }
}

/// All unordered pairs separated by at most `fov_diagonal + margin`.
pub fn build_pair_database(stars: &[Star], fov_diagonal: f64, margin: f64) -> PairDatabase {
    let max_pair_angle = fov_diagonal + margin;
    let cos_min = max_pair_angle.cos();
    let mut entries = Vec::new();
    for (i, si) in stars.iter().enumerate() {
        for (j, sj) in stars.iter().enumerate().skip(i + 1) {
            let c = si.direction.dot(&sj.direction);
            if c >= cos_min {
                entries.push(PairEntry {
                    cos_angle: c,
                    a: StarIndex(i as u32),
                    b: StarIndex(j as u32),
                });
            }
        }
    }
    entries.sort_by(|x, y| {
        x.cos_angle
            .total_cmp(&y.cos_angle)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    PairDatabase {
        entries,
        max_pair_angle,
    }
}

/// Linear-map range-search accelerator over a sorted [`PairDatabase`].
///
/// Bin boundaries are `v_j = intercept + slope·j` for `j = 0..=m`, widened by
/// a small margin past both ends so `k[0] = 0` and `k[m] = m`; `k[j]` counts
/// the entries with `cos_angle <= v_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct KVector {
    k: Vec<u32>,
    slope: f64,
    intercept: f64,
    direct_scan: bool,
}

impl KVector {
    pub fn k(&self) -> &[u32] {
        &self.k
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// True when the database was too small for a line and queries scan.
    pub fn is_direct_scan(&self) -> bool {
        self.direct_scan
    }
}

pub fn build_kvector(db: &PairDatabase) -> KVector {
    let m = db.entries.len();
    if m < 2 {
        return KVector {
            k: Vec::new(),
            slope: 0.0,
            intercept: 0.0,
            direct_scan: true,
        };
    }
    let y_min = db.entries[0].cos_angle;
    let y_max = db.entries[m - 1].cos_angle;
    let xi = f64::EPSILON * 8.0 * y_min.abs().max(y_max.abs()).max(1.0);
    let span = (y_max - y_min).max(f64::EPSILON);
    let slope = (span + 2.0 * xi) / m as f64;
    let intercept = y_min - xi;
    let mut k = Vec::with_capacity(m + 1);
    let mut count = 0usize;
    for j in 0..=m {
        let v = intercept + slope * j as f64;
        while count < m && db.entries[count].cos_angle <= v {
            count += 1;
        }
        k.push(count as u32);
    }
    // Floating error on the last boundary must not lose the top entries.
    k[m] = m as u32;
    KVector {
        k,
        slope,
        intercept,
        direct_scan: false,
    }
}

/// Entries whose `cos_angle` lies in `[cos_lo, cos_hi]`.
pub fn kvector_range<'a>(kv: &KVector, db: &'a PairDatabase, cos_lo: f64, cos_hi: f64) -> &'a [PairEntry] {
    if kv.direct_scan {
        return db.linear_range(cos_lo, cos_hi);
    }
    if !(cos_lo <= cos_hi) {
        return &[];
    }
    let m = db.entries.len() as i64;
    let j_lo = (((cos_lo - kv.intercept) / kv.slope).floor() as i64 - 1).clamp(0, m);
    let j_hi = (((cos_hi - kv.intercept) / kv.slope).ceil() as i64 + 1).clamp(0, m);
    let mut start = kv.k[j_lo as usize] as usize;
    let mut end = kv.k[j_hi as usize] as usize;
    let entries = &db.entries;
    while start < end && entries[start].cos_angle < cos_lo {
        start += 1;
    }
    while end > start && entries[end - 1].cos_angle > cos_hi {
        end -= 1;
    }
    &entries[start..end]
}

/// Catalog, pair table and k-vector bundled for the identification code.
#[derive(Debug, Clone)]
pub struct StarDatabase {
    stars: Vec<Star>,
    pairs: PairDatabase,
    kvector: KVector,
}

impl StarDatabase {
    pub fn build(stars: Vec<Star>, fov_diagonal: f64, margin: f64) -> Self {
        let pairs = build_pair_database(&stars, fov_diagonal, margin);
        Self::from_parts(stars, pairs)
    }

    pub fn from_parts(stars: Vec<Star>, pairs: PairDatabase) -> Self {
        let kvector = build_kvector(&pairs);
        Self {
            stars,
            pairs,
            kvector,
        }
    }

    pub fn stars(&self) -> &[Star] {
        &self.stars
    }

    pub fn star(&self, s: StarIndex) -> &Star {
        &self.stars[s.0 as usize]
    }

    #[inline]
    pub fn direction(&self, s: StarIndex) -> &UnitVec3 {
        &self.stars[s.0 as usize].direction
    }

    pub fn pairs(&self) -> &PairDatabase {
        &self.pairs
    }

    pub fn kvector(&self) -> &KVector {
        &self.kvector
    }

    #[inline]
    pub fn range(&self, cos_lo: f64, cos_hi: f64) -> &[PairEntry] {
        kvector_range(&self.kvector, &self.pairs, cos_lo, cos_hi)
    }

    /// Catalog pairs matching an observed separation (given by its cosine)
    /// within `tolerance` radians.
    pub fn pairs_near(&self, observed_cos: f64, tolerance: f64) -> &[PairEntry] {
        let theta = observed_cos.clamp(-1.0, 1.0).acos();
        let lo = (theta + tolerance).min(std::f64::consts::PI).cos();
        let hi = (theta - tolerance).max(0.0).cos();
        self.range(lo, hi)
    }

    /// Writes the versioned little-endian binary dump described in the README.
    pub fn save_binary<W: Write>(&self, out: W) -> Result<(), CatalogError> {
        let mut w = BufWriter::new(out);
        w.write_all(DB_MAGIC)?;
        w.write_all(&DB_VERSION.to_le_bytes())?;
        w.write_all(&(self.stars.len() as u64).to_le_bytes())?;
        for s in &self.stars {
            w.write_all(&s.catalog_id.to_le_bytes())?;
            for c in s.direction.to_array() {
                w.write_all(&c.to_le_bytes())?;
            }
            w.write_all(&s.magnitude.to_le_bytes())?;
        }
        w.write_all(&self.pairs.max_pair_angle.to_le_bytes())?;
        w.write_all(&(self.pairs.entries.len() as u64).to_le_bytes())?;
        for e in &self.pairs.entries {
            w.write_all(&e.cos_angle.to_le_bytes())?;
            w.write_all(&e.a.0.to_le_bytes())?;
            w.write_all(&e.b.0.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_binary<R: Read>(input: R) -> Result<Self, CatalogError> {
        let mut r = BufReader::new(input);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DB_MAGIC {
            return Err(CatalogError::BadDatabase("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != DB_VERSION {
            return Err(CatalogError::BadDatabase(format!("unsupported version {version}")));
        }
        let n_stars = read_u64(&mut r)? as usize;
        let mut stars = Vec::with_capacity(n_stars);
        for _ in 0..n_stars {
            let catalog_id = read_u32(&mut r)?;
            let v = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
            let direction = UnitVec3::try_from(v)
                .map_err(|e| CatalogError::BadDatabase(format!("star {catalog_id}: {e}")))?;
            let magnitude = read_f64(&mut r)?;
            stars.push(Star {
                catalog_id,
                direction,
                magnitude,
            });
        }
        let max_pair_angle = read_f64(&mut r)?;
        let n_pairs = read_u64(&mut r)? as usize;
        let mut entries = Vec::with_capacity(n_pairs);
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..n_pairs {
            let cos_angle = read_f64(&mut r)?;
            let a = read_u32(&mut r)?;
            let b = read_u32(&mut r)?;
            if cos_angle < prev || a as usize >= n_stars || b as usize >= n_stars {
                return Err(CatalogError::BadDatabase("entries unsorted or out of range".into()));
            }
            prev = cos_angle;
            entries.push(PairEntry {
                cos_angle,
                a: StarIndex(a),
                b: StarIndex(b),
            });
        }
        Ok(Self::from_parts(
            stars,
            PairDatabase {
                entries,
                max_pair_angle,
            },
        ))
    }

    /// CSV dump of the sorted pair table: `cos_angle,angle_deg,id_a,id_b`.
    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<(), CatalogError> {
        let mut w = BufWriter::new(out);
        writeln!(w, "cos_angle,angle_deg,id_a,id_b")?;
        for e in &self.pairs.entries {
            writeln!(
                w,
                "{:.17},{:.9},{},{}",
                e.cos_angle,
                e.cos_angle.clamp(-1.0, 1.0).acos().to_degrees(),
                self.star(e.a).catalog_id,
                self.star(e.b).catalog_id
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CatalogError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CatalogError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CatalogError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
