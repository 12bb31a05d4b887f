mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use startrack::catalog::{load_catalog, PairEntry, StarDatabase, BUNDLED_CATALOG_CSV};
use startrack::attitude::UnitVec3;

/// Stars below the threshold, counted from the raw text.
fn raw_count(threshold: f64) -> usize {
    BUNDLED_CATALOG_CSV
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(3).unwrap().trim().parse::<f64>().unwrap() < threshold)
        .count()
}

fn scan(entries: &[PairEntry], lo: f64, hi: f64) -> (usize, usize) {
    let start = entries.iter().filter(|e| e.cos_angle < lo).count();
    let end = entries.iter().filter(|e| e.cos_angle <= hi).count();
    (start, end.max(start))
}

#[test]
fn bundled_catalog_has_1608_stars_below_magnitude_5() {
    assert_eq!(common::db().stars().len(), 1608);
    assert_eq!(raw_count(5.0), 1608);
}

#[test]
fn directions_follow_right_ascension_and_declination() {
    let db = common::db();
    for line in BUNDLED_CATALOG_CSV.lines().skip(1).take(2000) {
        let f: Vec<&str> = line.split(',').collect();
        let id: u32 = f[0].parse().unwrap();
        let Some(star) = db.stars().iter().find(|s| s.catalog_id == id) else { continue };
        let (ra, dec) = (f[1].parse::<f64>().unwrap().to_radians(), f[2].parse::<f64>().unwrap().to_radians());
        let v = star.direction.as_vector();
        assert!((v.x - dec.cos() * ra.cos()).abs() < 1e-12);
        assert!((v.y - dec.cos() * ra.sin()).abs() < 1e-12);
        assert!((v.z - dec.sin()).abs() < 1e-12);
    }
}

#[test]
fn pair_table_matches_brute_force() {
    let db = common::db();
    let max = db.pairs().max_pair_angle();
    let stars = db.stars();
    let mut count = 0;
    for i in 0..stars.len() {
        for j in i + 1..stars.len() {
            if stars[i].direction.angle_to(&stars[j].direction) <= max {
                count += 1;
            }
        }
    }
    // Pairs within a few ulps of the cut may land on either side.
    let diff = (db.pairs().len() as i64 - count as i64).abs();
    assert!(diff <= 2, "table {} brute force {count}", db.pairs().len());
    let e = db.pairs().entries();
    assert!(e.windows(2).all(|w| w[0].cos_angle <= w[1].cos_angle));
    assert!(e.iter().all(|p| p.a < p.b));
}

#[test]
fn kvector_matches_linear_scan() {
    let db = common::db();
    let e = db.pairs().entries();
    let (lo_all, hi_all) = (e[0].cos_angle, e[e.len() - 1].cos_angle);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let a = rng.random_range(lo_all - 1e-3..hi_all + 1e-3);
        let w = rng.random_range(0.0..2e-4);
        let got = db.range(a, a + w);
        let (s, t) = scan(e, a, a + w);
        assert_eq!(got.len(), t - s);
        if t > s {
            assert!(std::ptr::eq(&got[0], &e[s]));
        }
    }
}

#[test]
fn kvector_handles_exact_endpoints_and_empty_ranges() {
    let db = common::db();
    let e = db.pairs().entries();
    for &i in &[0, 1, e.len() / 2, e.len() - 2, e.len() - 1] {
        let c = e[i].cos_angle;
        let (s, t) = scan(e, c, c);
        assert_eq!(db.range(c, c).len(), t - s);
        assert!(db.range(c, c).iter().any(|p| std::ptr::eq(p, &e[i])));
    }
    assert!(db.range(0.5, 0.4).is_empty());
    assert!(db.range(-1.0, e[0].cos_angle - 1e-9).is_empty());
    assert!(db.range(1.0 + 1e-12, 2.0).is_empty());
}

#[test]
fn pairs_near_brackets_the_angle() {
    let db = common::db();
    let tol = startrack::arcsec(10.0);
    let theta = 5f64.to_radians();
    let got = db.pairs_near(theta.cos(), tol);
    assert!(!got.is_empty());
    for p in got {
        let a = p.cos_angle.acos();
        assert!((a - theta).abs() <= tol + 1e-12);
    }
}

#[test]
fn binary_database_round_trips() {
    let db = common::db();
    let mut buf = Vec::new();
    db.save_binary(&mut buf).unwrap();
    let back = StarDatabase::load_binary(buf.as_slice()).unwrap();
    assert_eq!(back.stars().len(), db.stars().len());
    assert_eq!(back.pairs().entries(), db.pairs().entries());
    assert_eq!(back.kvector(), db.kvector());
    assert!(StarDatabase::load_binary(&b"XXXX"[..]).is_err());
}

#[test]
fn custom_catalog_parses() {
    let text = "id,ra_deg,dec_deg,vmag\n1,0,0,1.0\n2,90,0,2.0\n3,0,90,6.0\n";
    let stars = load_catalog(text.as_bytes(), 5.0).unwrap();
    assert_eq!(stars.len(), 2);
    assert!((stars[1].direction.as_vector() - UnitVec3::y_axis().as_vector()).amax() < 1e-15);
}
