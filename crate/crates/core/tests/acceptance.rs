//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

mod common;

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use common::big;
use sblom::attacks::{collude_classic, dl_bruteforce, recover_coefficients};
use sblom::classic::{classic_key, derive_share, gen_master, ClassicShare, SymBivarPoly};
use sblom::kdc::peer::{presented_key, send_on};
use sblom::kdc::wire::LineConn;
use sblom::kdc::{open_stream, AuditLog, Kdc, KdcClient, KdcServer, Peer, Role, Verdict};
use sblom::modmath::{gen_prime, FieldParams};
use sblom::simplex::{
    issue_material, recv_key, send_key, setup, MasterSecret, PointRegistry, PointRule, PublicPoint,
    SimplexMaterial,
};
use sblom::Error;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("directed key agreement", c1_agreement),
        ("fixture regression", c2_fixture),
        ("direction asymmetry", c3_asymmetry),
        ("classic symmetry", c4_classic_symmetry),
        ("collusion threshold", c5_threshold),
        ("material hardness at toy scale", c6_dl),
        ("one extra residue", c7_overhead),
        ("end-to-end simplex enforcement", c8_end_to_end),
        ("exponent reduction oracle", c9_reduction),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// `n` users at registry-assigned points and their materials.
fn population(
    ms: &MasterSecret,
    n: usize,
    rule: PointRule,
    rng: &mut ChaCha20Rng,
) -> Vec<SimplexMaterial> {
    let params = ms.params();
    let mut reg = PointRegistry::new(rule);
    (0..n)
        .map(|i| {
            let pt = reg.assign(&format!("u{i}"), params, rng).unwrap();
            issue_material(ms, &pt).unwrap()
        })
        .collect()
}

fn all_pairs_agree(mats: &[SimplexMaterial], params: &FieldParams) -> Result<usize, String> {
    let mut n = 0;
    for a in mats {
        for b in mats {
            if a.user_id() == b.user_id() {
                continue;
            }
            let w = send_key(a, &b.point(), params).map_err(|e| e.to_string())?;
            let r = recv_key(b, &a.point(), params).map_err(|e| e.to_string())?;
            ensure(w == r, || {
                format!("{} -> {}: {} vs {}", a.user_id(), b.user_id(), w.k, r.k)
            })?;
            n += 1;
        }
    }
    Ok(n)
}

fn c1_agreement() -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let small = FieldParams::new(big(1019), true).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let ms = setup(3, &small, &mut rng).unwrap();
    let mats = population(&ms, 12, PointRule::default_for(&small), &mut rng);
    let n_small = all_pairs_agree(&mats, &small)?;
    let t_small = t.elapsed();
    ensure(n_small == 12 * 11, || format!("{n_small} pairs"))?;
    ensure(t_small < Duration::from_secs(1), || {
        format!("N=12 took {t_small:?}")
    })?;

    let large = gen_prime(64, true, Some(102)).unwrap();
    let t = Instant::now();
    let ms = setup(8, &large, &mut rng).unwrap();
    let mats = population(&ms, 50, PointRule::default_for(&large), &mut rng);
    let n_large = all_pairs_agree(&mats, &large)?;
    let t_large = t.elapsed();
    ensure(n_large == 50 * 49, || format!("{n_large} pairs"))?;
    ensure(t_large < Duration::from_secs(10), || {
        format!("N=50 took {t_large:?}")
    })?;
    Ok(format!(
        "{n_small} pairs at p=1019 in {t_small:.2?}, {n_large} pairs at 64 bits in {t_large:.2?}"
    ))
}

/// Plain `u64` square-and-multiply, independent of the library.
fn pow_u64(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

fn c2_fixture() -> Result<String, String> {
    let fp = FieldParams::new(big(23), true).unwrap();
    let alice = common::fixture_material("alice", 2);
    let bob = common::fixture_material("bob", 5);
    let h = |x: u64| (5 + 3 * x) % 22;
    let oracle_ab = pow_u64(5, h(2), 23);
    let oracle_ba = pow_u64(2, h(5), 23);
    ensure((oracle_ab, oracle_ba) == (22, 6), || {
        "oracle disagrees with the worked example".into()
    })?;
    let ab_w = send_key(&alice, &bob.point(), &fp).unwrap().k;
    let ab_r = recv_key(&bob, &alice.point(), &fp).unwrap().k;
    let ba_w = send_key(&bob, &alice.point(), &fp).unwrap().k;
    let ba_r = recv_key(&alice, &bob.point(), &fp).unwrap().k;
    for (got, want, what) in [
        (&ab_w, 22u32, "send 2->5"),
        (&ab_r, 22, "recv 2->5"),
        (&ba_w, 6, "send 5->2"),
        (&ba_r, 6, "recv 5->2"),
    ] {
        ensure(got == &fp.base(want), || {
            format!("{what}: {got}, expected {want}")
        })?;
    }
    Ok("K(2->5)=22, K(5->2)=6 on both derivation paths".into())
}

fn c3_asymmetry() -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let fp = gen_prime(64, true, Some(304)).unwrap();
    let ms = setup(3, &fp, &mut rng).unwrap();
    let mats = population(&ms, 120, PointRule::QuadraticResidue, &mut rng);
    let trials = 1000;
    let mut equal = 0;
    for _ in 0..trials {
        let pair: Vec<_> = mats.choose_multiple(&mut rng, 2).collect();
        let fwd = send_key(pair[0], &pair[1].point(), &fp).unwrap();
        let rev = send_key(pair[1], &pair[0].point(), &fp).unwrap();
        equal += usize::from(fwd.k == rev.k);
    }
    ensure(equal * 100 <= trials, || {
        format!("{equal}/{trials} symmetric pairs")
    })?;
    Ok(format!(
        "{equal}/{trials} ordered pairs had K(i->j) = K(j->i)"
    ))
}

fn c4_classic_symmetry() -> Result<String, String> {
    let fp = FieldParams::new(big(11), true).unwrap();
    let points: Vec<BigUint> = (2..=9u32).map(BigUint::from).collect();
    let mut checked = 0;
    for c00 in 0..11u32 {
        for c01 in 0..11u32 {
            for c11 in 0..11u32 {
                let f = SymBivarPoly::from_matrix(
                    vec![vec![c00.into(), c01.into()], vec![c01.into(), c11.into()]],
                    &fp,
                )
                .unwrap();
                let shares: Vec<ClassicShare> = points
                    .iter()
                    .map(|r| derive_share(&f, r, &fp).unwrap())
                    .collect();
                for (i, si) in shares.iter().enumerate() {
                    for (j, sj) in shares.iter().enumerate() {
                        if i == j {
                            continue;
                        }
                        let kij = classic_key(si, &points[j], &fp).unwrap();
                        let kji = classic_key(sj, &points[i], &fp).unwrap();
                        ensure(kij == kji, || {
                            format!("f=({c00},{c01},{c11}) pair ({i},{j})")
                        })?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{checked} ordered pairs over all 1331 masters at p=11"
    ))
}

fn c5_threshold() -> Result<String, String> {
    let fp = FieldParams::new(big(1019), true).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    for inst in 0..100 {
        let m = 1 + inst % 3;
        let f = gen_master(m, &fp, &mut rng).unwrap();
        let mut reg = PointRegistry::new(PointRule::Any);
        let shares: Vec<_> = (0..=m)
            .map(|i| {
                let pt = reg.assign(&format!("c{i}"), &fp, &mut rng).unwrap();
                derive_share(&f, &pt.r, &fp).unwrap()
            })
            .collect();
        let got = collude_classic(&shares, m, &fp).map_err(|e| format!("instance {inst}: {e}"))?;
        ensure(got == f, || format!("instance {inst}: wrong master"))?;
        ensure(
            matches!(
                collude_classic(&shares[..m], m, &fp),
                Err(Error::Insufficient { .. })
            ),
            || format!("instance {inst}: m shares were enough"),
        )?;
    }

    // p = 5, m = 1: adversary at x = 1, honest pair at 2 and 3. For every
    // share the adversary might hold, the honest key is uniform over Z_5.
    let p5 = FieldParams::new(big(5), true).unwrap();
    let (ra, rb, rc) = (big(1), big(2), big(3));
    let mut by_share: BTreeMap<Vec<BigUint>, [usize; 5]> = BTreeMap::new();
    let mut overall = [0usize; 5];
    for c00 in 0..5u32 {
        for c01 in 0..5u32 {
            for c11 in 0..5u32 {
                let f = SymBivarPoly::from_matrix(
                    vec![vec![c00.into(), c01.into()], vec![c01.into(), c11.into()]],
                    &p5,
                )
                .unwrap();
                let k = f.eval(&rb, &rc, &p5).to_usize().unwrap();
                by_share.entry(f.restrict(&ra, &p5)).or_default()[k] += 1;
                overall[k] += 1;
            }
        }
    }
    ensure(by_share.len() == 25, || {
        format!("{} distinct adversary shares", by_share.len())
    })?;
    for (share, counts) in &by_share {
        ensure(counts.iter().all(|&c| c == counts[0]), || {
            format!("share {share:?}: {counts:?}")
        })?;
    }
    ensure(overall == [25; 5], || format!("overall {overall:?}"))?;
    Ok("100/100 masters rebuilt from m+1 shares; honest key uniform under each of 25 adversary shares".into())
}

/// Smallest generator of `Z_p^*` for a safe prime `p = 2q + 1`.
fn primitive_root(p: u64) -> u64 {
    let q = (p - 1) / 2;
    (2..p)
        .find(|&g| pow_u64(g, 2, p) != 1 && pow_u64(g, q, p) != 1)
        .unwrap()
}

fn c6_dl() -> Result<String, String> {
    let t = Instant::now();
    let fp = FieldParams::new(big(23), true).unwrap();
    let alice = common::fixture_material("alice", 2);
    let rep = recover_coefficients(&alice, &fp, None).map_err(|e| e.to_string())?;
    ensure(rep.exponents == [5, 3], || {
        format!("fixture: {:?}", rep.exponents)
    })?;

    let fp20 = gen_prime(20, true, Some(606)).unwrap();
    let p = fp20.p().to_u64().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(607);
    let ms = setup(3, &fp20, &mut rng).unwrap();
    let truth: Vec<u64> = ms
        .coeffs()
        .iter()
        .map(|a| a.value().to_u64().unwrap())
        .collect();
    let g = primitive_root(p);
    let mat = issue_material(&ms, &PublicPoint::new("victim", g)).unwrap();
    let rep = recover_coefficients(&mat, &fp20, None).map_err(|e| e.to_string())?;
    ensure(rep.order == p - 1, || format!("order {}", rep.order))?;
    ensure(rep.exponents == truth, || {
        format!("20-bit: {:?} vs {truth:?}", rep.exponents)
    })?;
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;

    let big_p = FieldParams::new(big(16_777_259), false).unwrap();
    ensure(
        matches!(
            dl_bruteforce(&big_p.base(3u32), &big_p.base(2u32), &big_p, None),
            Err(Error::ModulusTooLarge(_))
        ),
        || "accepted p > 2^24".into(),
    )?;
    Ok(format!(
        "a_k recovered at p=23 and p={p:#x} ({} coefficients) in {elapsed:.2?}; p > 2^24 refused",
        truth.len()
    ))
}

/// Residues in a serialized key object, not counting the public point.
fn secret_residues(v: &Value) -> usize {
    fn count(v: &Value) -> usize {
        match v {
            Value::String(_) => 1,
            Value::Array(a) => a.iter().map(count).sum(),
            Value::Object(o) => o.values().map(count).sum(),
            _ => 0,
        }
    }
    let obj = v.as_object().unwrap();
    obj.iter()
        .filter(|(k, _)| *k != "user" && *k != "r")
        .map(|(_, v)| count(v))
        .sum()
}

fn c7_overhead() -> Result<String, String> {
    let fp = gen_prime(32, true, Some(707)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(708);
    let mut seen = Vec::new();
    for m in [1usize, 4, 8] {
        let ms = setup(m, &fp, &mut rng).unwrap();
        let f = gen_master(m, &fp, &mut rng).unwrap();
        let r: BigUint = rng.gen_range(2u64..1000).into();
        let mat =
            serde_json::to_value(issue_material(&ms, &PublicPoint::new("u", r.clone())).unwrap())
                .unwrap();
        let share = serde_json::to_value(derive_share(&f, &r, &fp).unwrap()).unwrap();
        let (a, b) = (secret_residues(&mat), secret_residues(&share));
        ensure(a == b + 1 && a == m + 2, || {
            format!("m={m}: material {a}, share {b}")
        })?;
        seen.push(format!("m={m}: {a} vs {b}"));
    }
    Ok(seen.join(", "))
}

fn c8_end_to_end() -> Result<String, String> {
    let t = Instant::now();
    let srv = KdcServer::bind("127.0.0.1:0", Kdc::setup(64, 3, Some(808)).unwrap(), None)
        .unwrap()
        .spawn()
        .unwrap();
    let admin = *srv.kdc().admin_token().unwrap();
    let mut c = KdcClient::connect(srv.addr()).unwrap();
    let mut peers = BTreeMap::new();
    let audit = AuditLog::default();
    for u in ["alice", "bob", "carol"] {
        let (_, tok) = c.register(u).unwrap();
        let (params, mat) = c.material(u, tok.secret()).unwrap();
        peers.insert(u, Peer::new(mat, params).with_audit(audit.clone()));
    }
    c.policy_set(vec![("carol".into(), "bob".into(), Verdict::Deny)], &admin)
        .unwrap();
    let (params, directory) = c.directory().unwrap();
    let point = |u: &str| directory.iter().find(|p| p.user_id == u).cloned().unwrap();

    // alice -> bob, delivered
    let v_ab = c.policy_check("alice", "bob").unwrap();
    let bob = peers.remove("bob").unwrap();
    let from_alice = point("alice");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let rx = thread::spawn(move || {
        let mut conn = LineConn::new(listener.accept().unwrap().0).unwrap();
        let got = bob.receive_from(&mut conn, &from_alice, v_ab);
        (got, bob)
    });
    let mut conn = LineConn::connect(addr).unwrap();
    let to_bob = point("bob");
    peers["alice"]
        .send_to(&mut conn, &to_bob, v_ab, b"meet at noon")
        .map_err(|e| e.to_string())?;
    let (got, bob) = rx.join().unwrap();
    ensure(got.as_deref().ok() == Some(&b"meet at noon"[..]), || {
        format!("bob got {got:?}")
    })?;

    // bob holds the reader end of alice -> bob and cannot write on it
    let mut reader = bob.open(Role::Reader, &point("alice"), v_ab).unwrap();
    ensure(
        matches!(reader.seal(b"reply"), Err(Error::DirectionMismatch)),
        || "reader sealed".into(),
    )?;

    // carol -> bob is denied: no context, key presented as zero
    let v_cb = c.policy_check("carol", "bob").unwrap();
    ensure(v_cb == Verdict::Deny, || "carol -> bob allowed".into())?;
    let carol = &peers["carol"];
    ensure(
        matches!(
            carol.open(Role::Writer, &to_bob, v_cb),
            Err(Error::PolicyDenied)
        ),
        || "carol opened a denied stream".into(),
    )?;
    let zero = presented_key(Role::Writer, carol.material(), &to_bob, v_cb, &params).unwrap();
    ensure(zero.k.is_zero(), || format!("presented key {}", zero.k))?;

    // carol forges an envelope anyway; bob refuses it without decrypting
    let from_carol = point("carol");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let rx = thread::spawn(move || {
        let mut conn = LineConn::new(listener.accept().unwrap().0).unwrap();
        bob.receive_from(&mut conn, &from_carol, v_cb)
    });
    let mut forged = open_stream(
        Role::Writer,
        carol.material(),
        &to_bob,
        Verdict::Allow,
        &params,
        &mut rand::thread_rng(),
    )
    .unwrap();
    let mut conn = LineConn::connect(addr).unwrap();
    let sent = send_on(&mut conn, &mut forged, b"psst");
    let refused = rx.join().unwrap();
    ensure(matches!(refused, Err(Error::PolicyDenied)), || {
        format!("bob: {refused:?}")
    })?;
    ensure(matches!(sent, Err(Error::PolicyDenied)), || {
        format!("carol: {sent:?}")
    })?;
    ensure(!audit.opened("carol", "bob"), || {
        "a carol -> bob context exists".into()
    })?;

    let elapsed = t.elapsed();
    srv.shutdown();
    ensure(elapsed < Duration::from_secs(2), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("delivered, DirectionMismatch, PolicyDenied with key 0, forged envelope refused; {elapsed:.2?}"))
}

/// Plain `u128` modular exponentiation; exponents here fit in 128 bits
/// without any reduction.
fn pow_u128(mut b: u128, mut e: u128, p: u128) -> u128 {
    let mut acc = 1 % p;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    acc
}

fn c9_reduction() -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(909);
    let mut pairs = 0;
    for inst in 0..20 {
        let bits = rng.gen_range(10..=16);
        let fp = gen_prime(bits, true, Some(rng.gen())).unwrap();
        let p = fp.p().to_u128().unwrap();
        let m = rng.gen_range(1..=4);
        let ms = setup(m, &fp, &mut rng).unwrap();
        let a: Vec<u128> = ms
            .coeffs()
            .iter()
            .map(|c| c.value().to_u128().unwrap())
            .collect();
        let mats = population(&ms, 8, PointRule::default_for(&fp), &mut rng);
        for s in &mats {
            for r in &mats {
                if s.user_id() == r.user_id() {
                    continue;
                }
                let rs = s.r().to_u128().unwrap();
                let rr = r.r().to_u128().unwrap();
                // z_k = rs^k with no reduction: rs < 2^16, k <= 4
                let z: Vec<u128> = (0..=m as u32).map(|k| rs.pow(k)).collect();
                let via_b = r.b().iter().zip(&z).fold(1u128, |acc, (bk, zk)| {
                    acc * pow_u128(bk.value().to_u128().unwrap(), *zk, p) % p
                });
                let h_full: u128 = a.iter().zip(&z).map(|(ak, zk)| ak * zk).sum();
                let direct = pow_u128(rr, h_full, p);
                let got = recv_key(r, &s.point(), &fp)
                    .unwrap()
                    .k
                    .value()
                    .to_u128()
                    .unwrap();
                ensure(got == via_b && got == direct, || {
                    format!(
                        "instance {inst} p={p} {}->{}: {got} {via_b} {direct}",
                        s.user_id(),
                        r.user_id()
                    )
                })?;
                pairs += 1;
            }
        }
    }
    Ok(format!(
        "{pairs} ordered pairs over 20 instances match the unreduced u128 oracle"
    ))
}
