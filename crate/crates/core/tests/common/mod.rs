#![allow(dead_code)]

use num_bigint::BigUint;
use sblom::kdc::Kdc;
use sblom::modmath::FieldParams;
use sblom::simplex::{issue_material, MasterSecret, PointRule, SimplexMaterial};

pub fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

/// p = 23 (safe), h(x) = 5 + 3x.
pub fn fixture_master() -> MasterSecret {
    let fp = FieldParams::new(big(23), true).unwrap();
    MasterSecret::from_coeffs(vec![big(5), big(3)], &fp).unwrap()
}

/// KDC over the fixture master with alice at r=2 and bob at r=5. The
/// residue rule is off so the small fixture points are accepted.
pub fn fixture_kdc() -> Kdc {
    let mut kdc = Kdc::with_master(fixture_master(), PointRule::Any, 11);
    kdc.register_at("alice", big(2)).unwrap();
    kdc.register_at("bob", big(5)).unwrap();
    kdc
}

pub fn fixture_material(user: &str, r: u64) -> SimplexMaterial {
    let ms = fixture_master();
    issue_material(&ms, &sblom::simplex::PublicPoint::new(user, r)).unwrap()
}
