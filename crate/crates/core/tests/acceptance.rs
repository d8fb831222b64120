//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use oocran::control::ControlPlane;
use oocran::engine::SwapStatus;
use oocran::model::{Actuator, ActuatorAction, ActuatorBinding, NsDescriptor, NsState, VnfRole};
use oocran::monitor::{AlertRule, DeliveryStatus, MetricSample, Predicate};
use oocran::planner::{fit_linear, plan_vwi, vwi_ns_descriptor, SwapStrategy, TimeModel, VwiDescriptor, VwiTemplate, REFERENCE_SETUP_TIMES};
use oocran::queue::{LogOutcome, TaskKind};
use oocran::rf;
use oocran::scenario::{HostSpec, Scenario};
use oocran::sim::simulate;
use oocran::time::SimTime;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

const AREAS: [(u32, f64); 5] = [(1, 2826.0), (5, 14_130.0), (10, 28_260.0), (20, 56_520.0), (30, 84_780.0)];

fn table_one() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/table1.toml");
    let sc = Scenario::load(&path).map_err(|e| e.to_string())?;
    let report = simulate(&sc, 120.0).map_err(|e| e.to_string())?;
    ensure!(report.services.len() == 5, "{} services", report.services.len());
    let mut got = Vec::new();
    for (ns, (_, expected)) in report.services.iter().zip(REFERENCE_SETUP_TIMES) {
        let at = ns.active_at.ok_or_else(|| format!("{} never ACTIVE", ns.name))?.as_secs_f64();
        ensure!((at - expected).abs() <= 1e-3, "{} ACTIVE at {at} s, expected {expected} s", ns.name);
        got.push(format!("{at:.2}"));
    }
    Ok(format!("ACTIVE at {} s", got.join(" / ")))
}

fn coverage() -> Outcome {
    for (n, area) in AREAS {
        let plan = plan_vwi(&VwiDescriptor::new("t", area), &TimeModel::reference_table()).map_err(|e| e.to_string())?;
        ensure!(plan.n_enodebs == n, "{area} m2 gave n={}", plan.n_enodebs);
        let err = (plan.covered_area_m2 - area).abs() / area;
        ensure!(err < 1e-3, "{area} m2 covered {} ({:.3}%)", plan.covered_area_m2, err * 100.0);
    }
    Ok("n = 1/5/10/20/30, areas within 0.06%".into())
}

fn campus() -> Outcome {
    let plan = plan_vwi(&VwiDescriptor::new("campus", 58_241.0), &TimeModel::reference_linear()).map_err(|e| e.to_string())?;
    ensure!(plan.n_enodebs == 21, "n={}", plan.n_enodebs);
    let t = plan.estimated_setup_s;
    ensure!((55.0..=75.0).contains(&t), "estimate {t} s");
    Ok(format!("n=21, {t:.2} s"))
}

fn linear_fit() -> Outcome {
    // Closed-form normal equations, computed independently of the planner.
    let k = REFERENCE_SETUP_TIMES.len() as f64;
    let (sx, sy, sxx, sxy) = REFERENCE_SETUP_TIMES.iter().fold((0.0, 0.0, 0.0, 0.0), |(a, b, c, d), &(n, t)| {
        let x = n as f64;
        (a + x, b + t, c + x * x, d + x * t)
    });
    let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let intercept = (sy - slope * sx) / k;
    let fit = fit_linear(&REFERENCE_SETUP_TIMES).map_err(|e| e.to_string())?;
    ensure!((fit.b_s_per_enodeb - slope).abs() < 1e-9 && (fit.a_s - intercept).abs() < 1e-9, "fit {fit:?} vs oracle {intercept} + {slope} n");
    ensure!(slope > 0.0, "slope {slope}");
    let worst = REFERENCE_SETUP_TIMES
        .iter()
        .map(|&(n, t)| ((intercept + slope * n as f64) - t).abs() / t)
        .fold(0.0, f64::max);
    ensure!(worst < 0.10, "max residual {:.1}%", worst * 100.0);
    Ok(format!("{intercept:.2} + {slope:.3}·n s, max residual {:.1}%", worst * 100.0))
}

fn vwi(n: u32) -> NsDescriptor {
    let plan = plan_vwi(&VwiDescriptor::new(format!("vwi-{n}"), n as f64 * PI * 900.0), &TimeModel::reference_table()).unwrap();
    vwi_ns_descriptor(&format!("vwi-{n}"), 1.4e6, &plan, &VwiTemplate::default())
}

fn roomy() -> Scenario {
    let mut sc = Scenario {
        hosts: vec![HostSpec {
            vcpus: 256,
            ram_mb: 1 << 20,
            count: 2,
        }],
        ..Scenario::default()
    };
    sc.pool.f_start_hz = 2.0e9;
    sc.pool.f_end_hz = 3.0e9;
    sc
}

fn swaps() -> Outcome {
    let mut o = roomy().build_orchestrator().map_err(|e| e.to_string())?;
    let old = o.create_ns(vwi(5)).map_err(|e| e.to_string())?;
    o.run_until_settled().map_err(|e| e.to_string())?;
    let hard = o.swap(old, vwi(20), SwapStrategy::Hard).map_err(|e| e.to_string())?;
    let down = hard.downtime_s.unwrap_or(f64::NAN);
    ensure!(hard.status == SwapStatus::Completed, "HARD {:?}", hard.status);
    ensure!((down - 60.19).abs() < 1e-3, "HARD downtime {down}");
    let logged = o
        .events()
        .iter()
        .any(|e| e.entity_id == hard.swap_id.to_string() && e.event == "COMPLETED downtime 60.190s");
    ensure!(logged, "HARD downtime missing from the event log");

    let current = hard.new_ns.ok_or("HARD swap has no new service")?;
    let soft = o.swap(current, vwi(10), SwapStrategy::SoftHandover).map_err(|e| e.to_string())?;
    ensure!(soft.downtime_s == Some(0.0), "SOFT downtime {:?}", soft.downtime_s);
    ensure!(soft.peak_resource_overlap == soft.old_vms + soft.new_vms, "SOFT peak {} != {} + {}", soft.peak_resource_overlap, soft.old_vms, soft.new_vms);
    ensure!(soft.peak_resource_overlap == 30, "SOFT peak {}", soft.peak_resource_overlap);
    Ok(format!("HARD downtime {down:.2} s; SOFT downtime 0, peak {} VMs", soft.peak_resource_overlap))
}

fn no_interference() -> Outcome {
    common::run_cases(1000, common::pool_ops(), common::check_pool_sequence)?;
    Ok("1000 sequences, brute-force checker clean".into())
}

fn leak_freedom() -> Outcome {
    common::run_cases(500, common::engine_ops(), common::check_engine_sequence)?;
    Ok("500 sequences, infrastructure pristine after teardown".into())
}

fn alarm_loop() -> Outcome {
    let mut sc = Scenario::default();
    sc.actuators.push(Actuator::new("scale-out", ActuatorAction::ScaleOut));
    sc.rules.push(AlertRule {
        rule_id: "cpu-high".into(),
        metric: "cpu_load".into(),
        predicate: Predicate::Gt,
        threshold: 80.0,
        consecutive: 3,
        alarm_id: "cpu-alarm".into(),
        vnf_id: None,
    });
    let mut cp = ControlPlane::from_scenario(&sc, "acceptance").map_err(|e| e.to_string())?;
    let mut d = NsDescriptor::lte_downlink();
    d.actuator_bindings.push(ActuatorBinding {
        alarm_id: "cpu-alarm".into(),
        actuator: "scale-out".into(),
    });
    let ns = cp.engine.create_ns(d).map_err(|e| e.to_string())?;
    cp.engine.run_until_settled().map_err(|e| e.to_string())?;
    let enbs = |cp: &ControlPlane| cp.engine.vnfs_of(ns).iter().filter(|v| v.descriptor.role == VnfRole::EnodebTx).count();
    let deploys = |cp: &ControlPlane| {
        cp.engine
            .queue()
            .log()
            .iter()
            .filter(|e| e.ns_id == ns && e.kind == TaskKind::DeployVnf && e.outcome == LogOutcome::Done)
            .count()
    };
    let (enbs_before, deploys_before) = (enbs(&cp), deploys(&cp));
    let vnf = cp.engine.vnfs_of(ns).iter().find(|v| v.descriptor.role == VnfRole::EnodebTx).map(|v| v.id).ok_or("no eNodeB")?;

    let t0 = cp.engine.now().as_secs_f64();
    let mut fired = 0;
    for i in 0..3 {
        fired += cp
            .ingest(MetricSample {
                vnf_id: vnf,
                metric: "cpu_load".into(),
                value: 90.0,
                ts: SimTime::from_secs_f64(t0 + i as f64),
            })
            .map_err(|e| e.to_string())?
            .len();
    }
    ensure!(fired == 1, "{fired} alarms fired");
    let receipts = cp.deliver_loopback();
    let accepted = receipts.iter().filter(|r| r.status == DeliveryStatus::Accepted).count();
    ensure!(accepted == 1, "{accepted} callbacks accepted");
    cp.engine.run_until_settled().map_err(|e| e.to_string())?;
    let ran = deploys(&cp) - deploys_before;
    ensure!(ran == 1, "{ran} DEPLOY_VNF tasks ran");
    ensure!(enbs(&cp) == enbs_before + 1, "eNodeBs {} -> {}", enbs_before, enbs(&cp));
    let state = cp.engine.ns(ns).map(|n| n.state);
    ensure!(state == Some(NsState::Active), "service {state:?}");
    Ok(format!("1 alarm, 1 accepted callback, 1 DEPLOY_VNF, eNodeBs {enbs_before} -> {}", enbs(&cp)))
}

fn link_budget() -> Outcome {
    const C: f64 = 299_792_458.0;
    let (f, d, b): (f64, f64, f64) = (2.6e9, 30.0, 1.4e6);
    let friis = 20.0 * (4.0 * PI * d * f / C).log10();
    let noise = -174.0 + 10.0 * b.log10();
    let oracle = 0.0 - friis - noise;
    let lb = rf::link_budget(0.0, f, d, b, rf::DEFAULT_SNR_THRESHOLD_DB).map_err(|e| e.to_string())?;
    ensure!((lb.snr_db - 42.25).abs() <= 0.05, "SNR {}", lb.snr_db);
    ensure!((lb.snr_db - oracle).abs() < 1e-6, "SNR {} vs oracle {oracle}", lb.snr_db);
    let step = rf::fspl_db(2.0 * d, f).map_err(|e| e.to_string())? - rf::fspl_db(d, f).map_err(|e| e.to_string())?;
    ensure!((step - 6.0206).abs() <= 1e-4, "doubling adds {step} dB");
    Ok(format!("SNR {:.2} dB, doubling +{step:.4} dB", lb.snr_db))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("table-1 setup times (virtual time)", table_one),
        ("coverage column", coverage),
        ("campus scenario", campus),
        ("linear fit", linear_fit),
        ("swap semantics", swaps),
        ("no interference", no_interference),
        ("leak freedom", leak_freedom),
        ("end-to-end alarm loop", alarm_loop),
        ("link budget", link_budget),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
