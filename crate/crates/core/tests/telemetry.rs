mod common;

use common::{fault_trace, signature};
use wifault::domain::FaultType;
use wifault::sim::RawTrace;
use wifault::telemetry::{
    emit_flow, emit_monitor, emit_packet_features, emit_warnings, Side, WarningEvent, WarningKind,
    WarningRuleConfig,
};

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Re-evaluates an event's rule directly on the trace.
fn rule_holds(trace: &RawTrace, e: &WarningEvent, rules: &WarningRuleConfig) -> bool {
    let t = (e.t_s as f64 / trace.schedule.tick_s) as usize;
    let v = e.node;
    let snap = &trace.snapshots[t];
    let node = &snap.nodes[v.index()];
    if !node.alive {
        return false;
    }
    let sent_loss = |k: usize| {
        let s = &trace.snapshots[k];
        mean(
            &s.flows
                .iter()
                .filter(|f| f.src == v && f.offered_bps > 0.0)
                .map(|f| f.loss)
                .collect::<Vec<_>>(),
        )
    };
    let sent_latency = |k: usize| {
        let s = &trace.snapshots[k];
        mean(
            &s.flows
                .iter()
                .filter(|f| f.src == v && f.delivered_bps > 0.0)
                .map(|f| f.latency_ms)
                .collect::<Vec<_>>(),
        )
    };
    match e.kind {
        WarningKind::ConnectivityDegradation => {
            let k = rules.connectivity_ticks;
            t + 1 >= k
                && (0..trace.n_flows()).any(|i| {
                    snap.flows[i].dst == v
                        && trace.snapshots[t + 1 - k..=t]
                            .iter()
                            .all(|s| s.flows[i].delivered_bps <= 0.0)
                })
        }
        WarningKind::PacketLoss => {
            let lo = (t + 1).saturating_sub(rules.loss_window_ticks);
            let w: Vec<f64> = (lo..=t).filter_map(sent_loss).collect();
            mean(&w).is_some_and(|l| l > rules.loss_threshold)
        }
        WarningKind::ExcessiveDelay => {
            let mut pre: Vec<f64> = (0..trace.injection_tick())
                .filter_map(sent_latency)
                .collect();
            pre.sort_by(f64::total_cmp);
            let base = match pre.len() {
                0 => return false,
                n if n % 2 == 0 => (pre[n / 2 - 1] + pre[n / 2]) / 2.0,
                n => pre[n / 2],
            };
            sent_latency(t).is_some_and(|l| base > 0.0 && l > rules.delay_factor * base)
        }
        WarningKind::ProcessDown => !node.app_running,
        WarningKind::ResourceAnomaly => node.cpu_pct.max(node.mem_pct) > rules.resource_threshold,
        WarningKind::Reassociation => {
            t > 0 && node.associated && !trace.snapshots[t - 1].nodes[v.index()].associated
        }
    }
}

#[test]
fn every_warning_is_rederivable_from_the_trace() {
    let rules = WarningRuleConfig::default();
    let mut checked = 0;
    for fault in FaultType::ALL {
        for seed in 0..6 {
            let (trace, _) = fault_trace(fault, seed);
            for e in emit_warnings(&trace, &rules).unwrap() {
                assert!(rule_holds(&trace, &e, &rules), "{fault} seed {seed}: {e:?}");
                assert!((0.0..=1.0).contains(&e.severity));
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} events checked");
}

#[test]
fn normal_windows_rarely_warn() {
    let rules = WarningRuleConfig::default();
    let (mut events, mut node_ticks) = (0, 0);
    for seed in 0..100 {
        let (trace, _) = fault_trace(FaultType::Normal, seed);
        events += emit_warnings(&trace, &rules).unwrap().len();
        node_ticks += trace.n_nodes() * trace.snapshots.len();
    }
    let rate = events as f64 / node_ticks as f64;
    assert!(rate < 0.01, "false-warning rate {rate}");
}

#[test]
fn flow_records_pair_senders_and_receivers() {
    let mut ratios = Vec::new();
    for seed in 0..10 {
        let (trace, _) = fault_trace(FaultType::Normal, seed);
        let recs = emit_flow(&trace);
        assert_eq!(recs.len(), 2 * trace.n_flows() * trace.snapshots.len());
        for pair in recs.chunks(2) {
            let (s, r) = (&pair[0], &pair[1]);
            assert_eq!((s.side, r.side), (Side::Sender, Side::Receiver));
            assert_eq!((s.t_s, s.src, s.dst), (r.t_s, r.src, r.dst));
            assert!(r.throughput_bps <= s.throughput_bps);
            if s.throughput_bps > 0.0 {
                ratios.push(r.throughput_bps / s.throughput_bps);
            }
        }
    }
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[ratios.len() / 2] >= 0.97);
}

#[test]
fn crashed_node_goes_silent() {
    let (trace, target) = fault_trace(FaultType::NodeCrash, 3);
    let inj_s = trace.schedule.injection_at_s;
    let recs = emit_flow(&trace);
    let to_target: Vec<_> = recs
        .iter()
        .filter(|r| {
            r.side == Side::Receiver && r.t_s >= inj_s && (r.dst == target || r.src == target)
        })
        .collect();
    assert!(!to_target.is_empty());
    assert!(to_target.iter().all(|r| r.throughput_bps == 0.0));
    assert!(emit_monitor(&trace)
        .iter()
        .all(|m| m.node != target || m.t_s < inj_s));
}

#[test]
fn app_crash_reports_process_down_on_target() {
    for seed in 0..20 {
        let (trace, target) = fault_trace(FaultType::AppCrash, seed);
        let w = emit_warnings(&trace, &WarningRuleConfig::default()).unwrap();
        assert!(w
            .iter()
            .any(|e| e.kind == WarningKind::ProcessDown && e.node == target));
    }
}

#[test]
fn rate_adaptation_failure_doubles_retransmissions() {
    for seed in 0..20 {
        let (trace, target) = fault_trace(FaultType::RateAdaptationFailure, seed);
        let inj_s = trace.schedule.injection_at_s;
        let feats = emit_packet_features(&trace);
        let retx = |post: bool| {
            let v: Vec<f64> = feats
                .iter()
                .filter(|p| p.src == target && (p.t_s >= inj_s) == post)
                .map(|p| p.retx_fraction)
                .collect();
            mean(&v).unwrap()
        };
        assert!(
            retx(true) >= 2.0 * retx(false),
            "seed {seed}: {} vs {}",
            retx(true),
            retx(false)
        );
    }
}

#[test]
fn packet_features_come_in_ten_tick_segments() {
    let (trace, _) = fault_trace(FaultType::Normal, 1);
    let segments = trace.snapshots.len().div_ceil(10);
    assert_eq!(
        emit_packet_features(&trace).len(),
        segments * trace.n_flows()
    );
}

#[test]
fn monitor_cadence_is_every_five_ticks() {
    let (trace, _) = fault_trace(FaultType::Normal, 2);
    let recs = emit_monitor(&trace);
    assert_eq!(recs.len(), trace.n_nodes() * trace.snapshots.len() / 5);
    assert!(recs.iter().all(|m| m.app_process_up));
}

#[test]
fn outage_faults_and_lag_faults_look_different() {
    use wifault::domain::Phenomenon;
    for fault in FaultType::FAULTS {
        for seed in 0..20 {
            let (trace, target) = fault_trace(fault, seed);
            let s = signature(&trace, target);
            match fault.phenomenon() {
                Phenomenon::Disconnect => assert!(s.longest_outage >= 10, "{fault} seed {seed}"),
                Phenomenon::Lag => {
                    assert!(s.delivering_share >= 0.8, "{fault} seed {seed}");
                    assert!(
                        s.latency_ratio >= 1.5 || s.loss_ratio >= 1.5,
                        "{fault} seed {seed}"
                    );
                }
                Phenomenon::None => unreachable!(),
            }
        }
    }
}
