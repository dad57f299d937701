//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use bellsim_core::analysis::{
    accuracy_success_sweep, ch_efficiency_bound, chsh_experiment, compare_to_ch_bound,
    conditional_correlation, estimate_joint, modest_variant_check, success_probability,
    variant2_contract_check, ClauseKind, SweepSettings,
};
use bellsim_core::models::controls::SettingLeak;
use bellsim_core::models::*;
use bellsim_core::protocol::locality_audit;
use bellsim_core::target_law::{marginal, singlet_law, variation_distance};
use bellsim_core::{Direction, Executor, Model, Party, SelectionRule, SettingsQuad};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn exec() -> Executor {
    Executor::default()
}

fn binary(
    model: &dyn Model,
    a: &Direction,
    b: &Direction,
    n: u64,
    seed: u64,
) -> Result<bellsim_core::Tally, String> {
    exec()
        .run_experiment(model, a, b, n, seed, &SelectionRule::Binary)
        .map_err(|e| e.to_string())
}

fn c1_singlet_law() -> Verdict {
    let a = Direction::planar_deg(0.0);
    let b = Direction::planar_deg(60.0);
    let law = singlet_law(&a, &b);
    let cells = law.cells();
    let want = [0.125, 0.375, 0.375, 0.125];
    let cell_err = cells
        .iter()
        .zip(want)
        .map(|(c, w)| (c - w).abs())
        .fold(0.0, f64::max);
    let mut marg_err: f64 = 0.0;
    let mut corr_err: f64 = 0.0;
    for deg in [0.0, 33.0, 60.0, 90.0, 147.0, 180.0] {
        let b = Direction::planar_deg(deg);
        let l = singlet_law(&a, &b);
        for party in [Party::A, Party::B] {
            marg_err = marg_err.max((marginal(&l, party) - 0.5).abs());
        }
        corr_err = corr_err.max((l.correlation() + a.dot(&b)).abs());
    }
    let worst = cell_err.max(marg_err).max(corr_err);
    check(
        worst <= 1e-12,
        format!("cells {cells:?}, worst deviation {worst:.1e}"),
    )
}

fn c2_guessing_k2() -> Verdict {
    let m = finite_guessing(FiniteGuessParams::planar_quad()).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for (i, (a, b)) in m.setting_pairs().unwrap().iter().enumerate() {
        let t = binary(&m, a, b, 1_000_000, 20 + i as u64)?;
        let s = success_probability(&t).unwrap().value;
        let tv = variation_distance(&estimate_joint(&t).unwrap().law(), &singlet_law(a, b));
        ok &= (s - 0.25).abs() <= 0.002 && tv < 0.01;
        notes.push(format!("{s:.4}/{tv:.4}"));
    }
    check(ok, format!("success/tv per pair: {}", notes.join(", ")))
}

fn c3_guessing_k3_and_octants() -> Verdict {
    let m =
        finite_guessing(FiniteGuessParams::planar_evenly_spaced(3)).map_err(|e| e.to_string())?;
    let (a, b) = m.setting_pairs().unwrap()[4];
    let s3 = success_probability(&binary(&m, &a, &b, 1_000_000, 30)?)
        .unwrap()
        .value;
    let p = partition_guessing(PartitionParams::default()).map_err(|e| e.to_string())?;
    let a = Direction::normalized(0.3, -0.5, 0.6).unwrap();
    let b = Direction::normalized(-0.2, 0.9, -0.4).unwrap();
    let s8 = success_probability(&binary(&p, &a, &b, 10_000_000, 31)?)
        .unwrap()
        .value;
    check(
        (s3 - 1.0 / 9.0).abs() <= 0.002 && (s8 - 1.0 / 64.0).abs() <= 5e-4,
        format!(
            "k=3: {s3:.5} (1/9 = {:.5}); k=8: {s8:.6} (1/64 = {:.6})",
            1.0 / 9.0,
            1.0 / 64.0
        ),
    )
}

fn c4_one_sided() -> Verdict {
    let m = one_sided_detection();
    let a = Direction::planar_deg(0.0);
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, deg) in [180.0, 120.0, 90.0, 60.0, 0.0].into_iter().enumerate() {
        let b = Direction::planar_deg(deg);
        let t = binary(&m, &a, &b, 1_000_000, 40 + i as u64)?;
        let s = success_probability(&t).unwrap().value;
        let e = conditional_correlation(&t).unwrap().value;
        ok &= (s - 0.5).abs() <= 0.0015 && (e + a.dot(&b)).abs() <= 0.005;
        notes.push(format!("a·b={:+.1}: {s:.4}, E={e:+.4}", a.dot(&b)));
    }
    check(ok, notes.join("; "))
}

fn c5_chsh() -> Verdict {
    let quad = SettingsQuad::standard_planar();
    let n = 1_000_000;
    let one_sided = chsh_experiment(
        &one_sided_detection(),
        &quad,
        n,
        50,
        &SelectionRule::Binary,
        &exec(),
    )
    .map_err(|e| e.to_string())?;
    let sign = chsh_experiment(
        &deterministic_sign(),
        &quad,
        n,
        51,
        &SelectionRule::Binary,
        &exec(),
    )
    .map_err(|e| e.to_string())?;
    let tsirelson = 2.0 * std::f64::consts::SQRT_2;
    let mut ok = (one_sided.chsh - tsirelson).abs() <= 0.01 && (sign.chsh - 2.0).abs() <= 0.01;
    let mut always = Vec::new();
    for model in shipped_models() {
        if model.flavor() != bellsim_core::Flavor::Binary {
            continue;
        }
        let (a, b) = model
            .setting_pairs()
            .map(|p| p[0])
            .unwrap_or(quad.pairs()[0]);
        let pilot = binary(model.as_ref(), &a, &b, 20_000, 52)?;
        if pilot.n_accepted != pilot.n_total {
            continue;
        }
        let r = chsh_experiment(
            model.as_ref(),
            &quad,
            n,
            53,
            &SelectionRule::Binary,
            &exec(),
        )
        .map_err(|e| e.to_string())?;
        ok &= r.chsh <= 2.0 + 4.0 * r.combined_stderr;
        always.push(format!("{} {:.4}", model.name(), r.chsh));
    }
    ok &= !always.is_empty();
    check(
        ok,
        format!(
            "one-sided {:.4} ± {:.4}, sign {:.4}; always-accept: {}",
            one_sided.chsh,
            one_sided.combined_stderr,
            sign.chsh,
            always.join(", ")
        ),
    )
}

fn c6_coincidence_containment() -> Verdict {
    let inner: Arc<dyn Model> = Arc::new(one_sided_detection());
    let a = Direction::planar_deg(10.0);
    let b = Direction::normalized(0.4, 0.2, -0.7).unwrap();
    let plain = exec()
        .run_records(inner.as_ref(), &a, &b, 200_000, 60, &SelectionRule::Binary)
        .map_err(|e| e.to_string())?;
    let plain_tally = binary(inner.as_ref(), &a, &b, 1_000_000, 61)?;
    let mut ok = true;
    let cs = [1e-6, 0.05, 1.0, 10.0, 1e3];
    for c in cs {
        let wrapped = coincidence_embedding(CoincidenceParams {
            inner: inner.clone(),
            c,
            spread: 1.0,
        })
        .map_err(|e| e.to_string())?;
        let window = SelectionRule::Window { c };
        let recs = exec()
            .run_records(&wrapped, &a, &b, 200_000, 60, &window)
            .map_err(|e| e.to_string())?;
        ok &= recs.len() == plain.len()
            && recs.iter().zip(&plain).all(|(w, p)| {
                w.accepted == p.accepted && (!p.accepted || (w.x == p.x && w.y == p.y))
            });
        let t = exec()
            .run_experiment(&wrapped, &a, &b, 1_000_000, 61, &window)
            .map_err(|e| e.to_string())?;
        ok &= t.accepted == plain_tally.accepted && t.n_accepted == plain_tally.n_accepted;
        let (ew, ep) = (
            estimate_joint(&t).unwrap(),
            estimate_joint(&plain_tally).unwrap(),
        );
        ok &= ew
            .cells
            .iter()
            .zip(ep.cells)
            .all(|(x, y)| x.to_bits() == y.to_bits());
    }
    check(
        ok,
        format!("accepted sets and conditional laws bitwise equal for c in {cs:?}"),
    )
}

fn c7_variant2_contract() -> Verdict {
    let n = 1_000_000;
    let v2 = variant2_contract_check(&asymmetric_variant2(), n, 70, 0.01, &exec())
        .map_err(|e| e.to_string())?;
    let rm = variant2_contract_check(&role_mixture_symmetric(), n, 71, 0.01, &exec())
        .map_err(|e| e.to_string())?;
    let gap = rm
        .clause(ClauseKind::DetectionIndependence)
        .map(|c| c.measured)
        .unwrap_or(f64::NAN);
    let ok = v2.passed
        && v2.eta_a.value == 1.0
        && (v2.eta_b.value - 0.5).abs() <= 0.0015
        && rm.failed_clauses() == vec![ClauseKind::DetectionIndependence]
        && (gap - 0.0625).abs() <= 0.002;
    check(
        ok,
        format!(
            "variant2-asym passed={} η_A={} η_B={:.4}; role-mixture failed {:?} with gap {gap:.4}",
            v2.passed,
            v2.eta_a.value,
            v2.eta_b.value,
            rm.failed_clauses()
        ),
    )
}

fn c8_efficiency_bound() -> Verdict {
    let bound = ch_efficiency_bound();
    let cmp = compare_to_ch_bound(2.0 / 3.0);
    let modest = modest_variant_check(&role_mixture_symmetric(), 200_000, 80, 0.01, &exec())
        .map_err(|e| e.to_string())?;
    let implied = modest.eta_a.value.min(modest.eta_b.value);
    let ok = (bound - 0.8284271).abs() <= 1e-6
        && cmp.below_bound
        && (cmp.margin - 0.1618).abs() < 1e-4
        && (implied - 2.0 / 3.0).abs() < 0.01
        && compare_to_ch_bound(implied).below_bound;
    check(
        ok,
        format!(
            "bound {bound:.7}; 2/3 below by {:.4}; role-mixture modest implied rate {implied:.4}",
            cmp.margin
        ),
    )
}

fn c9_locality() -> Verdict {
    let a = Direction::planar_deg(20.0);
    let b1 = Direction::normalized(0.3, 0.3, 0.9).unwrap();
    let b2 = Direction::planar_deg(130.0);
    let mut ok = true;
    let mut names = Vec::new();
    for model in shipped_models() {
        let (a, b1, b2) = match model.setting_pairs() {
            Some(p) => (
                p[0].0,
                p[0].1,
                p.iter()
                    .map(|q| q.1)
                    .find(|b| *b != p[0].1)
                    .unwrap_or(p[0].1),
            ),
            None => (a, b1, b2),
        };
        ok &= locality_audit(model.as_ref(), 20_000, 90, &a, &b1, &b2);
        names.push(model.name());
    }
    let leak_caught = !locality_audit(&SettingLeak::new(), 20_000, 90, &a, &b1, &b2);
    check(
        ok && leak_caught,
        format!("clean: {}; leak detected: {leak_caught}", names.join(", ")),
    )
}

fn bellsim(dir: &Path, args: &[&str]) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bellsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn read_outputs(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let report = std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())?;
    let csv = std::fs::read(dir.join("out.csv")).unwrap_or_default();
    Ok((report, csv))
}

fn c9_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenarios = [
        (
            "simulate",
            r#"{"name":"one-sided"}"#,
            r#"{"kind":"planar_pair","a_deg":0,"b_deg":60}"#,
            200_000,
            "",
        ),
        (
            "chsh",
            r#"{"name":"coincidence","inner":{"name":"one-sided"}}"#,
            r#"{"kind":"planar_quad"}"#,
            50_000,
            "",
        ),
        (
            "contract",
            r#"{"name":"variant2-asym"}"#,
            r#"{"kind":"planar_quad"}"#,
            20_000,
            r#","tolerances":{"contract":0.05}"#,
        ),
        (
            "sweep",
            r#"{"name":"guess-partition","k":8}"#,
            r#"{"kind":"planar_quad"}"#,
            20_000,
            r#","sweep":{"ks":[2,4,8],"settings":{"kind":"random","count":3}}"#,
        ),
        (
            "audit-locality",
            r#"{"name":"role-mixture"}"#,
            r#"{"kind":"audit","a":[0,0,1],"b1":[1,0,0],"b2":[0,1,0]}"#,
            20_000,
            "",
        ),
    ];
    let mut checked = Vec::new();
    for (cmd, model, settings, trials, extra) in scenarios {
        let config = dir.path().join(format!("{cmd}.json"));
        std::fs::write(
            &config,
            format!(
                r#"{{"schema":"bellsim/scenario/v1","model":{model},"settings":{settings},"trials":{trials},"seed":99{extra}}}"#
            ),
        )
        .map_err(|e| e.to_string())?;
        let cfg = config.to_str().unwrap();
        // each run gets its own directory and the same relative output paths,
        // so whole manifests compare byte for byte
        let mut runs = Vec::new();
        for (tag, workers) in [("w1", "1"), ("w8", "8"), ("replay", "1")] {
            let run_dir = dir.path().join(format!("{cmd}-{tag}"));
            std::fs::create_dir(&run_dir).map_err(|e| e.to_string())?;
            let (code, _) = bellsim(
                &run_dir,
                &[
                    cmd,
                    "--config",
                    cfg,
                    "--workers",
                    workers,
                    "--out",
                    "report.json",
                    "--csv",
                    "out.csv",
                ],
            )?;
            if code != 0 {
                return Err(format!("{cmd} --workers {workers} exited {code}"));
            }
            runs.push(read_outputs(&run_dir)?);
        }
        // replay from the manifest's own config echo
        let manifest: serde_json::Value =
            serde_json::from_slice(&runs[0].0).map_err(|e| e.to_string())?;
        let echo_dir = dir.path().join(format!("{cmd}-echo"));
        std::fs::create_dir(&echo_dir).map_err(|e| e.to_string())?;
        let echo = echo_dir.join("scenario.json");
        std::fs::write(&echo, serde_json::to_vec(&manifest["config"]).unwrap())
            .map_err(|e| e.to_string())?;
        let (code, _) = bellsim(
            &echo_dir,
            &[cmd, "--config", echo.to_str().unwrap(), "--workers", "8"],
        )?;
        if code != 0 {
            return Err(format!("{cmd} replay exited {code}"));
        }
        runs.push(read_outputs(&echo_dir)?);
        if let Some(i) = runs.iter().position(|r| r != &runs[0]) {
            return Err(format!("{cmd}: run {i} differs from the first"));
        }
        checked.push(format!("{cmd} ({} B)", runs[0].0.len()));
    }
    Ok(format!(
        "byte-identical at 1 and 8 workers and on replay: {}",
        checked.join(", ")
    ))
}

fn c10_sweep() -> Verdict {
    let ks = [2, 4, 8, 16];
    let curve = accuracy_success_sweep(
        &ks,
        1_000_000,
        100,
        SweepSettings::Random { count: 6 },
        &exec(),
    )
    .map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut notes = Vec::new();
    for p in &curve.points {
        ok &= (p.success - p.bound).abs() <= 3.0 * p.success_err;
        notes.push(format!(
            "k={} success {:.5} (1/k² {:.5}) accuracy {:.3}",
            p.k, p.success, p.bound, p.accuracy_max
        ));
    }
    for w in curve.points.windows(2) {
        let slack = 3.0 * (w[0].accuracy_err.powi(2) + w[1].accuracy_err.powi(2)).sqrt();
        ok &= w[1].accuracy_max <= w[0].accuracy_max + slack;
    }
    check(ok, notes.join("; "))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1", c1_singlet_law),
        ("2", c2_guessing_k2),
        ("3", c3_guessing_k3_and_octants),
        ("4", c4_one_sided),
        ("5", c5_chsh),
        ("6", c6_coincidence_containment),
        ("7", c7_variant2_contract),
        ("8", c8_efficiency_bound),
        ("9a", c9_locality),
        ("9b", c9_determinism),
        ("10", c10_sweep),
    ];
    let mut failed = 0;
    for (id, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS criterion {id}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
