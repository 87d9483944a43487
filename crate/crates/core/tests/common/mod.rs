//! Trace fixtures and fault-signature measurements shared by integration tests.
#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wifault::domain::{
    build_topology, build_traffic_profile, FaultSpec, FaultType, NodeId, Scenario, WindowSchedule,
};
use wifault::sim::{hidden_receiver, run_window, sample_severity, RawTrace, Snapshot};

pub const N_NODES: usize = 7;

/// One window with `fault` injected, scenario and target rotating with the seed
/// and severity drawn from the default ranges.
pub fn fault_trace(fault: FaultType, seed: u64) -> (RawTrace, NodeId) {
    let scenario = Scenario::ALL[(seed % 3) as usize];
    let s = 5000 + seed;
    let topo = build_topology(scenario, N_NODES, s).unwrap();
    let traffic = build_traffic_profile(scenario, &topo, s).unwrap();
    let target = NodeId((seed % N_NODES as u64) as u16);
    let sched = WindowSchedule::default();
    let spec = if fault.is_normal() {
        FaultSpec::normal(sched.injection_at_s)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut spec = FaultSpec::new(fault, target, sched.injection_at_s);
        spec.severity = sample_severity(fault, &Default::default(), &mut rng);
        if fault == FaultType::HiddenNode {
            let r = hidden_receiver(&topo, target);
            spec.partner = (0..N_NODES as u16)
                .map(NodeId)
                .find(|&n| n != target && Some(n) != r);
        }
        spec
    };
    (
        run_window(scenario, &topo, &traffic, &spec, &sched, s).unwrap(),
        target,
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        f64::NAN
    } else {
        v[v.len() / 2]
    }
}

/// Before/after view of the flows touching one node.
pub struct Signature {
    /// Longest post-injection zero-delivery run on any of the node's flows.
    pub longest_outage: usize,
    /// Share of post-injection ticks where the node's flows deliver anything.
    pub delivering_share: f64,
    pub latency_ratio: f64,
    pub loss_ratio: f64,
}

pub fn signature(trace: &RawTrace, node: NodeId) -> Signature {
    let inj = trace.injection_tick();
    let flows: Vec<usize> = (0..trace.n_flows())
        .filter(|&i| {
            let f = &trace.snapshots[0].flows[i];
            f.src == node || f.dst == node
        })
        .collect();
    let post = &trace.snapshots[inj..];
    let mut longest_outage = 0;
    for &i in &flows {
        let mut run = 0;
        for s in post {
            run = if s.flows[i].delivered_bps > 0.0 {
                0
            } else {
                run + 1
            };
            longest_outage = longest_outage.max(run);
        }
    }
    let delivering = post
        .iter()
        .filter(|s| flows.iter().map(|&i| s.flows[i].delivered_bps).sum::<f64>() > 0.0)
        .count();
    let latency = |s: &Snapshot| {
        let v: Vec<f64> = flows
            .iter()
            .map(|&i| &s.flows[i])
            .filter(|f| f.delivered_bps > 0.0)
            .map(|f| f.latency_ms)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let loss = |s: &Snapshot| {
        flows.iter().map(|&i| s.flows[i].loss).sum::<f64>() / flows.len().max(1) as f64
    };
    let before = &trace.snapshots[..inj];
    let lat = |ss: &[Snapshot]| median(ss.iter().filter_map(latency).collect());
    let los = |ss: &[Snapshot]| median(ss.iter().map(loss).collect());
    Signature {
        longest_outage,
        delivering_share: delivering as f64 / post.len() as f64,
        latency_ratio: lat(post) / lat(before),
        loss_ratio: los(post) / los(before),
    }
}

pub type Pair = (Vec<f64>, Vec<bool>);

/// Micro-F1 as an exact fraction.
pub fn micro(pairs: &[Pair], tau: &[f64]) -> (u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (e, y) in pairs {
        for i in 0..tau.len() {
            match (e[i] >= tau[i], y[i]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        (1, 1)
    } else {
        (2 * tp, 2 * tp + fp + fn_)
    }
}

/// Exhaustive search over the joint threshold grid; among optimal vectors
/// the componentwise largest is returned.
pub fn brute_force(pairs: &[Pair]) -> Vec<f64> {
    let d = pairs[0].0.len();
    let cands: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            // Zero, every observed score, and one value above them all.
            let mut c: Vec<f64> = pairs.iter().map(|p| p.0[i]).collect();
            c.extend([0.0, f64::INFINITY]);
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect();
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for c in &cands {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                c.iter().map(move |&t| {
                    let mut v = prefix.clone();
                    v.push(t);
                    v
                })
            })
            .collect();
    }
    let mut best: Option<(u64, u64)> = None;
    let mut optimal: Vec<Vec<f64>> = vec![];
    for tau in grid {
        let (a, b) = micro(pairs, &tau);
        match best {
            Some((ba, bb)) if a * bb < ba * b => {}
            Some((ba, bb)) if a * bb == ba * b => optimal.push(tau),
            _ => {
                best = Some((a, b));
                optimal = vec![tau];
            }
        }
    }
    let top: Vec<f64> = (0..d)
        .map(|i| {
            optimal
                .iter()
                .map(|t| t[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    assert!(optimal.contains(&top), "optimal set is not a product set");
    top
}
