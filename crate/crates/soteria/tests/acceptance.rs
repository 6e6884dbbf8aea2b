//! Acceptance gate: twelve end-to-end checks over the shipped models,
//! from cipher algebra to full-fabric trend reproduction. Every
//! criterion prints one verdict line (visible with `--nocapture`); the
//! gate fails after all lines have printed if any criterion failed.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soteria::attacks::{AttackScenario, AttackStrategy, SecurityReport};
use soteria::bits::Bits512;
use soteria::cipher::{decrypt, encrypt, Packet};
use soteria::engine::{run, RunReport, SimConfig};
use soteria::fabric::{
    build_firefly, build_luminoc, build_swiftnoc, Fabric, FabricParams,
};
use soteria::keyforge::{
    build_keystores, derive_gateway_keys, derive_multicast_key, derive_unicast_key, ErrorSignal,
    KeyStoreSet, Permutation, Role,
};
use soteria::photonics::{
    electrical_energy, packet_energy_breakdown, static_power, worst_case_loss, EnergyParams,
    LossParams,
};
use soteria::pvmap::{
    generate_batch, generate_pv_map, remedy_tuning, DieSpec, PvMap, PvParams,
};
use soteria::traffic::{parse_trace, TrafficMode, TrafficSpec};
use soteria::{ChannelId, GatewayId};

type Builder = fn(usize, &FabricParams) -> soteria::Result<Fabric>;

fn die() -> DieSpec {
    DieSpec {
        edge_mm: 20.0,
        grid_n: 128,
    }
}

fn desk_map(seed: u64) -> PvMap {
    generate_pv_map(seed, die(), PvParams::default()).unwrap()
}

fn secured_params() -> FabricParams {
    FabricParams {
        secured: true,
        ramps: true,
        ..Default::default()
    }
}

fn all_channels(fabric: &Fabric) -> BTreeSet<ChannelId> {
    fabric.channels.iter().map(|c| c.id).collect()
}

fn trace_cfg(trace: &str, secured: bool, fabric: &Fabric) -> SimConfig {
    SimConfig {
        secured_channels: if secured {
            all_channels(fabric)
        } else {
            BTreeSet::new()
        },
        pdes_enabled: secured,
        traffic: TrafficSpec {
            mode: TrafficMode::TraceFile,
            trace_entries: Some(parse_trace(trace).unwrap()),
            ..Default::default()
        },
        warmup_cycles: 0,
        measured_packets: 1000,
        ..Default::default()
    }
}

fn run_simple(fabric: &Fabric, map: &PvMap, stores: &KeyStoreSet, cfg: &SimConfig) -> RunReport {
    run(
        fabric,
        map,
        stores,
        &LossParams::default(),
        &EnergyParams::default(),
        cfg,
        None,
    )
    .unwrap()
}

/// 1: decrypt(encrypt(p)) is the identity for 10^4 random pairs, the
/// zero key is a no-op, and the sweep stays under a second.
fn c01_cipher_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
    for i in 0..10_000u64 {
        let payload = Bits512::random(&mut rng);
        let key = Bits512::random(&mut rng);
        let p = Packet::unicast(GatewayId(0), GatewayId(1), payload, i);
        let round_trip = decrypt(encrypt(p.clone(), &key).unwrap(), &key).unwrap();
        assert_eq!(round_trip, p);
        let zeroed = encrypt(p, &Bits512::ZERO).unwrap();
        assert_eq!(zeroed.payload, payload);
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
}

/// 2: unicast derivation against a hex-concatenation oracle and the
/// multicast fold against a byte-wise XOR oracle, 10^3 cases each.
fn c02_key_derivation_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC02);
    for _ in 0..1_000 {
        let codes: Vec<ErrorSignal> = (0..64)
            .map(|_| ErrorSignal {
                code: rng.random::<i8>(),
            })
            .collect();
        let perm = Permutation::random(&mut rng);
        let key = derive_unicast_key(&codes, &perm, GatewayId(9)).unwrap();
        let expected: String = perm
            .indices()
            .iter()
            .map(|&i| format!("{:02x}", codes[i as usize].code as u8))
            .collect();
        assert_eq!(key.bits.to_hex(), expected);
    }
    for _ in 0..1_000 {
        let n = rng.random_range(1..=8usize);
        let keys: Vec<_> = (0..n)
            .map(|k| {
                let codes: Vec<ErrorSignal> = (0..64)
                    .map(|_| ErrorSignal {
                        code: rng.random::<i8>(),
                    })
                    .collect();
                derive_unicast_key(&codes, &Permutation::random(&mut rng), GatewayId(k as u32))
                    .unwrap()
            })
            .collect();
        let folded = derive_multicast_key(&keys, ChannelId(0)).unwrap();
        let mut oracle = [0u8; 64];
        for key in &keys {
            for (acc, byte) in oracle.iter_mut().zip(key.bits.as_bytes()) {
                *acc ^= byte;
            }
        }
        assert_eq!(folded.bits.as_bytes(), &oracle);
    }
}

/// 3: 100 PV maps x 32 destination gateways at the published sigmas
/// yield 3200 unicast keys with zero collisions.
fn c03_key_uniqueness() {
    let fabric = build_swiftnoc(32, &FabricParams::default()).unwrap();
    let seeds: Vec<u64> = (0..100).collect();
    let maps = generate_batch(&seeds, die(), PvParams::default()).unwrap();
    let mut seen: BTreeSet<[u8; 64]> = BTreeSet::new();
    let mut total = 0usize;
    for map in &maps {
        for (_, key) in derive_gateway_keys(&fabric, map, 42).unwrap() {
            seen.insert(*key.bits.as_bytes());
            total += 1;
        }
    }
    assert_eq!(total, 3200);
    assert_eq!(seen.len(), 3200, "unicast key collision across PV maps");
}

fn lattice_row(
    fabric: &Fabric,
    map: &PvMap,
    stores: &KeyStoreSet,
    secured: bool,
    ramps_enabled: bool,
    compromised: &[u32],
) -> SecurityReport {
    let cfg = SimConfig {
        secured_channels: if secured {
            all_channels(fabric)
        } else {
            BTreeSet::new()
        },
        pdes_enabled: secured,
        ramps_enabled,
        traffic: TrafficSpec {
            injection_rate: 0.05,
            multicast_fraction: 0.15,
            ..Default::default()
        },
        warmup_cycles: 1_000,
        measured_packets: 14_000,
        seed: 7,
        ..Default::default()
    };
    let scenario = AttackScenario {
        strategy: AttackStrategy::CoordinatedRom,
        snooper_gateways: BTreeSet::from([GatewayId(1)]),
        compromised_source_roms: compromised.iter().map(|&g| GatewayId(g)).collect(),
        metadata_visible: true,
    };
    run(
        fabric,
        map,
        stores,
        &LossParams::default(),
        &EnergyParams::default(),
        &cfg,
        Some(&scenario),
    )
    .unwrap()
    .security
    .unwrap()
}

/// 4: the security lattice on an 8-gateway fabric, >= 10^4 snoops per
/// row. The compromised ROM is the snooper's own source ROM, which
/// holds exactly the keys of every packet it can observe.
fn c04_security_lattice() {
    let start = Instant::now();
    let fabric = build_swiftnoc(8, &secured_params()).unwrap();
    let map = desk_map(501);
    let stores = build_keystores(&fabric, &map, 42).unwrap();

    // Cleartext: everything snooped is read directly.
    let baseline = lattice_row(&fabric, &map, &stores, false, false, &[1]);
    assert!(baseline.packets_snooped >= 10_000, "{baseline:?}");
    assert_eq!(baseline.decipher_rate, 1.0, "{baseline:?}");

    // PDES only: metadata names the target, the stolen ROM has its key.
    let pdes_only = lattice_row(&fabric, &map, &stores, true, false, &[1]);
    assert!(pdes_only.packets_snooped >= 10_000, "{pdes_only:?}");
    assert_eq!(pdes_only.decipher_rate, 1.0, "{pdes_only:?}");

    // Full SOTERIA: metadata hidden, so the ROM is a uniform guess over
    // its K+1 rows.
    let rows = stores
        .get(GatewayId(1), ChannelId(0), Role::Source)
        .unwrap()
        .entry_count();
    assert_eq!(rows, 8);
    let soteria_row = lattice_row(&fabric, &map, &stores, true, true, &[1]);
    assert!(soteria_row.packets_snooped >= 10_000, "{soteria_row:?}");
    let p = 1.0 / rows as f64;
    let sigma = (p * (1.0 - p) / soteria_row.packets_snooped as f64).sqrt();
    assert!(
        (soteria_row.decipher_rate - p).abs() <= 3.0 * sigma,
        "rate {} vs expected {p} (3 sigma = {})",
        soteria_row.decipher_rate,
        3.0 * sigma
    );

    // No compromise: nothing deciphers.
    let clean = lattice_row(&fabric, &map, &stores, true, true, &[]);
    assert!(clean.packets_snooped >= 10_000, "{clean:?}");
    assert_eq!(clean.decipher_rate, 0.0, "{clean:?}");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

/// 5: securing a contention-free flow shifts latency by exactly 2
/// cycles per traversal, hence 4 on a LumiNoC cross route.
fn c05_encryption_latency_delta() {
    let swift = build_swiftnoc(8, &secured_params()).unwrap();
    let map = desk_map(5);
    let stores = build_keystores(&swift, &map, 42).unwrap();
    let plain = run_simple(&swift, &map, &stores, &trace_cfg("0 1 {3} U", false, &swift));
    let sec = run_simple(&swift, &map, &stores, &trace_cfg("0 1 {3} U", true, &swift));
    assert_eq!(sec.avg_latency_cycles - plain.avg_latency_cycles, 2.0);

    let lumi = build_luminoc(4, &secured_params()).unwrap();
    let lstores = build_keystores(&lumi, &map, 42).unwrap();
    // One row-only flow (1 -> 3) and one cross flow (1 -> 14), spaced
    // far enough apart to never contend.
    let trace = "0 1 {3} U\n100 1 {14} U";
    let plain = run_simple(&lumi, &map, &lstores, &trace_cfg(trace, false, &lumi));
    let sec = run_simple(&lumi, &map, &lstores, &trace_cfg(trace, true, &lumi));
    let row_delta = sec.latency_by_traversals[&1].avg_latency_cycles
        - plain.latency_by_traversals[&1].avg_latency_cycles;
    let cross_delta = sec.latency_by_traversals[&2].avg_latency_cycles
        - plain.latency_by_traversals[&2].avg_latency_cycles;
    assert_eq!(row_delta, 2.0);
    assert_eq!(cross_delta, 4.0);
}

/// 6: securing 0 < 2 < 4 < 8 of 8 channels never lowers latency or EDP,
/// for 10 of 10 traffic seeds.
fn c06_sensitivity_monotonicity() {
    let fabric = build_swiftnoc(16, &secured_params()).unwrap();
    assert_eq!(fabric.channels.len(), 8);
    let map = desk_map(21);
    let stores = build_keystores(&fabric, &map, 42).unwrap();
    for seed in 0..10u64 {
        let mut prev: Option<(f64, f64)> = None;
        for count in [0u32, 2, 4, 8] {
            let cfg = SimConfig {
                secured_channels: (0..count).map(ChannelId).collect(),
                traffic: TrafficSpec {
                    injection_rate: 0.02,
                    ..Default::default()
                },
                warmup_cycles: 800,
                measured_packets: 1_200,
                seed,
                ..Default::default()
            };
            let r = run_simple(&fabric, &map, &stores, &cfg);
            if let Some((lat, edp)) = prev {
                assert!(
                    r.avg_latency_cycles >= lat,
                    "latency fell at seed {seed}, {count} secured: {} < {lat}",
                    r.avg_latency_cycles
                );
                assert!(
                    r.edp_js >= edp,
                    "EDP fell at seed {seed}, {count} secured: {} < {edp}",
                    r.edp_js
                );
            }
            prev = Some((r.avg_latency_cycles, r.edp_js));
        }
    }
}

/// 7: attaching reservation waveguides moves worst-case loss by exactly
/// the 64 double-MR through terms, landing in the reported 1.3-1.7 dB
/// band for every full-scale builder.
fn c07_ramps_loss_delta() {
    let lp = LossParams::default();
    let builds: [(&str, Builder, usize); 3] = [
        ("firefly", build_firefly, 8),
        ("swiftnoc", build_swiftnoc, 32),
        ("luminoc", build_luminoc, 8),
    ];
    for (name, build, scale) in builds {
        let plain = build(scale, &FabricParams::default()).unwrap();
        let with_ramps = build(
            scale,
            &FabricParams {
                ramps: true,
                ..Default::default()
            },
        )
        .unwrap();
        let (_, base_db) = worst_case_loss(&plain, &lp).unwrap();
        let (_, ramps_db) = worst_case_loss(&with_ramps, &lp).unwrap();
        let doubles = with_ramps
            .detector_paths()
            .iter()
            .map(|(_, p)| p.through_mrs_double)
            .max()
            .unwrap();
        assert_eq!(doubles, 64, "{name}");
        let expected = f64::from(doubles) * lp.through_loss_double_mr_db;
        let delta = ramps_db - base_db;
        assert!(
            (delta - expected).abs() <= 1e-9,
            "{name}: delta {delta} vs {expected}"
        );
        assert!(
            (1.3..=1.7).contains(&delta),
            "{name}: delta {delta} dB outside the reported band"
        );
    }
}

/// 8: the two published tuning operating points are exact, and the
/// fabric-wide tuning power equals a brute-force per-MR recomputation.
fn c08_tuning_power_oracle() {
    let params = PvParams::default();
    let inject = remedy_tuning(0.4, &params);
    assert_eq!(inject.power_uw, 86.4);
    let heat = remedy_tuning(-0.4, &params);
    assert_eq!(heat.power_uw, 260.0);

    let fabric = build_swiftnoc(8, &secured_params()).unwrap();
    let map = desk_map(11);
    let reported = static_power(&fabric, &map, &LossParams::default(), &EnergyParams::default())
        .unwrap()
        .tuning_w;
    let mut brute_uw = 0.0f64;
    for placement in fabric.all_ring_placements() {
        let shift = map.sample_shift(placement.x_mm, placement.y_mm).unwrap();
        brute_uw += remedy_tuning(shift, &map.params).power_uw;
    }
    assert_eq!(reported, brute_uw * 1e-6);
}

/// 9: pooled field samples across 200 maps reproduce the marginal
/// moments within 5%, and a seed regenerates its map byte-identically.
fn c09_pv_field_statistics() {
    let params = PvParams::default();
    let seeds: Vec<u64> = (5_000..5_200).collect();
    let maps = generate_batch(&seeds, die(), params).unwrap();
    let mut n = 0u64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for map in &maps {
        // Total shift: within-die sample plus this die's D2D offset.
        for &v in map.field() {
            let total = v + map.d2d_offset_nm;
            n += 1;
            sum += total;
            sum_sq += total * total;
        }
    }
    let mean = sum / n as f64;
    let std = (sum_sq / n as f64 - mean * mean).sqrt();
    let model = params.marginal_std_nm();
    assert!(
        mean.abs() <= 0.05 * model,
        "pooled mean {mean} nm strays past 5% of {model} nm"
    );
    assert!(
        (std - model).abs() <= 0.05 * model,
        "pooled std {std} nm vs model {model} nm"
    );

    let again = generate_pv_map(seeds[17], die(), params).unwrap();
    let original = &maps[17];
    assert_eq!(original.field().len(), again.field().len());
    assert_eq!(original.d2d_offset_nm.to_bits(), again.d2d_offset_nm.to_bits());
    assert!(
        original
            .field()
            .iter()
            .zip(again.field())
            .all(|(a, b)| a.to_bits() == b.to_bits()),
        "same seed produced a different map"
    );
}

/// 10: reported energy equals per-class packet energy plus static power
/// over the window at 1e-9 relative, and the encipherment adder is
/// 0.482 pJ exactly.
fn c10_energy_audit() {
    let energy = EnergyParams::default();
    let secured = packet_energy_breakdown(512, &energy, true, 0).unwrap();
    let plain = packet_energy_breakdown(512, &energy, false, 0).unwrap();
    assert_eq!(secured.cipher_pj, 0.482);
    assert_eq!(plain.cipher_pj, 0.0);
    assert_eq!(secured.photonic_pj, plain.photonic_pj);

    let fabric = build_swiftnoc(8, &secured_params()).unwrap();
    let map = desk_map(31);
    let stores = build_keystores(&fabric, &map, 42).unwrap();
    // Half the channels secured, so classes mix plain and enciphered.
    let cfg = SimConfig {
        secured_channels: BTreeSet::from([ChannelId(0), ChannelId(1)]),
        traffic: TrafficSpec {
            injection_rate: 0.05,
            multicast_fraction: 0.1,
            ..Default::default()
        },
        warmup_cycles: 500,
        measured_packets: 2_000,
        ..Default::default()
    };
    let r = run_simple(&fabric, &map, &stores, &cfg);

    let per_leg = plain.total_j();
    let per_cipher_leg = secured.cipher_pj * 1e-12;
    let mut dynamic = 0.0f64;
    for class in &r.energy_classes {
        let per_packet = class.photonic_legs as f64 * per_leg
            + class.enciphered_legs as f64 * per_cipher_leg
            + electrical_energy(512, &energy, class.electrical_hops as u32);
        dynamic += class.packets as f64 * per_packet;
    }
    let window_s = r.window_cycles as f64 / (cfg.clock_ghz * 1e9);
    let recomputed = dynamic + r.static_power.total_w * window_s;
    assert!(
        (r.total_energy_j - recomputed).abs() <= 1e-9 * recomputed,
        "total {} vs recomputed {recomputed}",
        r.total_energy_j
    );
}

/// 11: full-scale structural counts. Metadata detectors per reservation
/// waveguide 14/64/16, double MRs 64, ROM rows 8/32/8 and 2.
fn c11_structural_audit() {
    let cases: [(Builder, usize, usize, usize); 3] = [
        (build_firefly, 8, 14, 8),
        (build_swiftnoc, 32, 64, 32),
        (build_luminoc, 8, 16, 8),
    ];
    for (build, scale, metadata_detectors, source_rows) in cases {
        let fabric = build(
            scale,
            &FabricParams {
                ramps: true,
                ..Default::default()
            },
        )
        .unwrap();
        let audit = fabric.structural_audit();
        assert!(audit.banks_sized_to_comb);
        for c in &audit.channels {
            assert_eq!(c.metadata_detectors, Some(metadata_detectors));
            assert_eq!(c.double_mrs, Some(64));
            assert_eq!(c.source_rom_entries, source_rows);
            assert_eq!(c.destination_rom_entries, 2);
        }
    }
}

fn relative_overhead(fabric: &Fabric, map: &PvMap, stores: &KeyStoreSet) -> f64 {
    let base = SimConfig {
        traffic: TrafficSpec {
            injection_rate: 0.005,
            multicast_fraction: 0.0,
            ..Default::default()
        },
        warmup_cycles: 1_000,
        measured_packets: 1_500,
        seed: 42,
        ..Default::default()
    };
    let plain_cfg = SimConfig {
        pdes_enabled: false,
        ..base.clone()
    };
    let sec_cfg = SimConfig {
        secured_channels: all_channels(fabric),
        ..base
    };
    let plain = run_simple(fabric, map, stores, &plain_cfg);
    let sec = run_simple(fabric, map, stores, &sec_cfg);
    (sec.avg_latency_cycles - plain.avg_latency_cycles) / plain.avg_latency_cycles
}

/// 12: at matched desk scale and light uniform load, Firefly's hybrid
/// traffic keeps its relative securing overhead below all-photonic
/// SwiftNoC, and LumiNoC cross routes pay more than row-only routes.
fn c12_architecture_overhead_ordering() {
    let map = desk_map(61);
    let firefly = build_firefly(8, &secured_params()).unwrap();
    let ff_stores = build_keystores(&firefly, &map, 42).unwrap();
    let swift = build_swiftnoc(8, &secured_params()).unwrap();
    let sn_stores = build_keystores(&swift, &map, 42).unwrap();
    let ff = relative_overhead(&firefly, &map, &ff_stores);
    let sn = relative_overhead(&swift, &map, &sn_stores);
    assert!(
        ff < sn,
        "relative overhead: firefly {ff:.4} is not below swiftnoc {sn:.4}"
    );

    let lumi = build_luminoc(4, &secured_params()).unwrap();
    let lstores = build_keystores(&lumi, &map, 42).unwrap();
    let base = SimConfig {
        traffic: TrafficSpec {
            injection_rate: 0.005,
            multicast_fraction: 0.0,
            ..Default::default()
        },
        warmup_cycles: 1_000,
        measured_packets: 1_500,
        seed: 42,
        ..Default::default()
    };
    let plain_cfg = SimConfig {
        pdes_enabled: false,
        ..base.clone()
    };
    let sec_cfg = SimConfig {
        secured_channels: all_channels(&lumi),
        ..base
    };
    let plain = run_simple(&lumi, &map, &lstores, &plain_cfg);
    let sec = run_simple(&lumi, &map, &lstores, &sec_cfg);
    let row_delta = sec.latency_by_traversals[&1].avg_latency_cycles
        - plain.latency_by_traversals[&1].avg_latency_cycles;
    let cross_delta = sec.latency_by_traversals[&2].avg_latency_cycles
        - plain.latency_by_traversals[&2].avg_latency_cycles;
    assert!(
        cross_delta > row_delta,
        "cross delta {cross_delta} not above row delta {row_delta}"
    );
}

#[test]
fn acceptance_gate() {
    let criteria: [(u32, &str, fn()); 12] = [
        (1, "cipher-identity", c01_cipher_identity),
        (2, "key-derivation-oracles", c02_key_derivation_oracles),
        (3, "key-uniqueness", c03_key_uniqueness),
        (4, "security-lattice", c04_security_lattice),
        (5, "encryption-latency-delta", c05_encryption_latency_delta),
        (6, "sensitivity-monotonicity", c06_sensitivity_monotonicity),
        (7, "ramps-loss-delta", c07_ramps_loss_delta),
        (8, "tuning-power-oracle", c08_tuning_power_oracle),
        (9, "pv-field-statistics", c09_pv_field_statistics),
        (10, "energy-audit", c10_energy_audit),
        (11, "structural-audit", c11_structural_audit),
        (12, "architecture-overhead-ordering", c12_architecture_overhead_ordering),
    ];
    let mut first_failure = None;
    for (number, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
        println!("acceptance {number:02} {name}: {verdict}");
        if let Err(payload) = outcome {
            first_failure.get_or_insert((number, name, payload));
        }
    }
    if let Some((number, name, payload)) = first_failure {
        eprintln!("acceptance criterion {number:02} ({name}) failed");
        std::panic::resume_unwind(payload);
    }
}
