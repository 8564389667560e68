//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! Derived quantities (bounds, thresholds, estimates, ledger totals) are
//! recomputed here from first principles rather than read back from the
//! library.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use dmamab::cli::{self, Args};
use dmamab::config::preset;
use dmamab::engine::{gaussian_config, run_experiment, run_trial, run_trial_with, SimConfig};
use dmamab::output::{BOUNDS_FILE, FIK_FILE, MANIFEST_FILE, REGRET_FILE};
use dmamab::{CommPolicy, Prior, RegretLedger};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// Independent re-statements of the exploration schedule.
const GAMMA: f64 = 1.5;
const ETA: f64 = 0.1;

fn psi(d2: f64, t: u64) -> f64 {
    if t <= 1 {
        return 0.0;
    }
    GAMMA * d2 * (1.0 + ETA).sqrt() * (t as f64).ln()
}

fn threshold(d2: f64, t: u64, gap: f64) -> u64 {
    (4.0 * psi(d2, t) / (gap * gap)).ceil() as u64
}

fn vartheta() -> f64 {
    1.0 / (1.0 + ETA).ln()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean and standard error of `a - b`, paired by trial.
fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_se(&d)
}

fn final_self(ledgers: &[RegretLedger]) -> Vec<f64> {
    ledgers
        .iter()
        .map(|l| l.self_regret.iter().sum::<f64>() / l.n_agents() as f64)
        .collect()
}

fn final_comm(ledgers: &[RegretLedger]) -> Vec<f64> {
    ledgers
        .iter()
        .map(|l| l.comm_regret.iter().sum::<f64>() / l.n_agents() as f64)
        .collect()
}

fn desk() -> SimConfig {
    preset("desk").unwrap().base
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let base = desk();
    // Δ = 1, d² = 4σ² = 8.
    let bound = 2.0 + 4.0 * vartheta() + threshold(8.0, base.horizon, 1.0) as f64;
    let mut worst = (0.0, String::new());
    let mut violations = 0;
    for comm in [CommPolicy::None, CommPolicy::Er { p: 0.2 }] {
        let r = run_experiment(&base.with_comm(comm.clone())).unwrap();
        let trials = r.ledgers.len() as f64;
        for agent in 0..base.n_agents {
            for option in 1..base.n_options {
                let pulls: u64 = r
                    .ledgers
                    .iter()
                    .map(|l| l.self_pulls[agent * base.n_options + option])
                    .sum();
                let mean = pulls as f64 / trials;
                if mean > bound {
                    violations += 1;
                }
                if mean > worst.0 {
                    worst = (mean, format!("{} agent {agent} option {option}", comm.name()));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        violations == 0 && elapsed < Duration::from_secs(60),
        format!(
            "max mean self pulls {:.1} ({}) vs bound {bound:.1}; {violations} violations; {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let t = 500u64;
    let trials = 10_000;
    let sigma2 = 2.0;
    let mut c = gaussian_config(1, vec![1.0, 0.0], sigma2, t, trials, 2020, CommPolicy::None);
    c.prior = Prior::Normal {
        mean: 0.5,
        std: sigma2.sqrt(),
    };
    let width_psi = psi(4.0 * sigma2, t);
    let mut exceed = 0usize;
    for trial in 0..trials {
        let out = run_trial_with(&c, trial, false).unwrap();
        let a = &out.agents[0];
        let (est, n) = (a.estimates()[0], a.counts()[0]);
        if (est - 1.0).abs() > (width_psi / n as f64).sqrt() {
            exceed += 1;
        }
    }
    let freq = exceed as f64 / trials as f64;
    let p0 = 2.0 / ((t * t) as f64 * (1.0 + ETA).ln());
    let se = (p0 * (1.0 - p0) / trials as f64).sqrt();
    let limit = p0 + 3.0 * se;
    let elapsed = start.elapsed();
    verdict(
        freq <= limit && elapsed < Duration::from_secs(120),
        format!(
            "tail frequency {freq:.2e} ({exceed}/{trials}) vs {p0:.2e} + 3·{se:.2e}; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Per-trial f for option 1, averaged over agents with defined values.
fn trial_f_option1(ledgers: &[RegretLedger]) -> Vec<f64> {
    ledgers
        .iter()
        .map(|l| {
            let n = l.n_options();
            let fs: Vec<f64> = (0..l.n_agents())
                .filter(|&k| l.fik_den[k * n + 1] > 0)
                .map(|k| l.fik_num[k * n + 1] as f64 / l.fik_den[k * n + 1] as f64)
                .collect();
            fs.iter().sum::<f64>() / fs.len() as f64
        })
        .collect()
}

fn criterion_3() -> Verdict {
    let base = desk();
    let n = base.n_options;
    let mut notes = Vec::new();
    let mut ok = true;

    let none = run_experiment(&base.with_comm(CommPolicy::None)).unwrap();
    let pooled_num: Vec<u64> = (0..none.pooled.fik_num.len())
        .map(|c| none.ledgers.iter().map(|l| l.fik_num[c]).sum())
        .collect();
    let pooled_den: Vec<u64> = (0..none.pooled.fik_den.len())
        .map(|c| none.ledgers.iter().map(|l| l.fik_den[c]).sum())
        .collect();
    let exact = pooled_num.iter().zip(&pooled_den).all(|(a, b)| a == b) && pooled_den.iter().all(|&d| d > 0);
    ok &= exact;
    notes.push(format!("no-comm f = 1 in every cell: {exact}"));

    let mut in_range = true;
    let mut lo = f64::INFINITY;
    for comm in [
        CommPolicy::Er { p: 0.1 },
        CommPolicy::Er { p: 0.5 },
        CommPolicy::Ucb { budget: 2 },
        CommPolicy::Ucb { budget: 4 },
    ] {
        let r = run_experiment(&base.with_comm(comm)).unwrap();
        for k in 0..base.n_agents {
            for i in 1..n {
                let num: u64 = r.ledgers.iter().map(|l| l.fik_num[k * n + i]).sum();
                let den: u64 = r.ledgers.iter().map(|l| l.fik_den[k * n + i]).sum();
                if den == 0 {
                    in_range = false;
                    continue;
                }
                let f = num as f64 / den as f64;
                lo = lo.min(f);
                in_range &= f > 0.0 && f <= 1.0;
            }
        }
    }
    ok &= in_range;
    notes.push(format!("ER/UCB f in (0, 1]: {in_range} (min {lo:.3})"));

    let f: Vec<Vec<f64>> = [0.0, 0.1, 0.3]
        .iter()
        .map(|&p| trial_f_option1(&run_experiment(&base.with_comm(CommPolicy::Er { p })).unwrap().ledgers))
        .collect();
    let means: Vec<f64> = f.iter().map(|v| mean_se(v).0).collect();
    for w in 0..2 {
        let (d, se) = paired(&f[w + 1], &f[w]);
        let mono = d <= se;
        ok &= mono;
        if !mono {
            notes.push(format!(
                "ER f rises between sweep points {w} and {} by {d:.4} (se {se:.4})",
                w + 1
            ));
        }
    }
    notes.push(format!(
        "ER f option 1 at p = 0, 0.1, 0.3: {:.3} {:.3} {:.3}",
        means[0], means[1], means[2]
    ));
    verdict(ok, notes.join("; "))
}

fn criterion_4() -> Verdict {
    let base = desk();
    let ps = [0.0, 0.1, 0.3, 0.6, 1.0];
    let runs: Vec<_> = ps
        .iter()
        .map(|&p| run_experiment(&base.with_comm(CommPolicy::Er { p })).unwrap())
        .collect();
    let selfs: Vec<Vec<f64>> = runs.iter().map(|r| final_self(&r.ledgers)).collect();
    let comms: Vec<Vec<f64>> = runs.iter().map(|r| final_comm(&r.ledgers)).collect();
    let (drop, se) = paired(&selfs[0], &selfs[2]);
    let mut ok = drop >= 3.0 * se;
    let mut notes = vec![format!(
        "self regret p=0 minus p=0.3: {drop:.2} (se {se:.2}, z {:.1})",
        drop / se
    )];
    let mut steps = Vec::new();
    for w in 0..ps.len() - 1 {
        let (d, se) = paired(&comms[w + 1], &comms[w]);
        ok &= d >= -se;
        steps.push(format!("{d:+.1}±{se:.1}"));
    }
    notes.push(format!("comm regret increments {}", steps.join(" ")));
    verdict(ok, notes.join("; "))
}

fn criterion_5() -> Verdict {
    let base = desk();
    let peers = (base.n_agents - 1) as f64;
    let mut ok = true;
    let mut notes = Vec::new();
    for connectivity in [2usize, 4] {
        let er = run_experiment(&base.with_comm(CommPolicy::Er {
            p: connectivity as f64 / peers,
        }))
        .unwrap();
        let ucb = run_experiment(&base.with_comm(CommPolicy::Ucb { budget: connectivity })).unwrap();
        let (gap, se) = paired(&final_self(&er.ledgers), &final_self(&ucb.ledgers));
        ok &= gap >= 0.0;
        if connectivity == 2 {
            ok &= gap >= 2.0 * se;
        }
        notes.push(format!(
            "n={connectivity}: ER minus UCB self regret {gap:.2} (se {se:.2})"
        ));
    }
    verdict(ok, notes.join("; "))
}

fn args(preset: &str, out: &Path) -> Args {
    Args {
        config: None,
        preset: Some(preset.to_string()),
        out: out.to_path_buf(),
        trials: None,
        seed: None,
        assert_bounds: false,
        desk_scale: false,
        dump_trace: false,
        threads: None,
        list_presets: false,
    }
}

fn criterion_6() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let outcome = match cli::run(&args("full", dir.path())) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("run failed: {e:#}")),
    };
    let elapsed = start.elapsed();
    let files = [REGRET_FILE, FIK_FILE, BOUNDS_FILE, MANIFEST_FILE];
    let present = files
        .iter()
        .all(|f| fs::metadata(dir.path().join(f)).map(|m| m.len() > 0).unwrap_or(false));
    let families = ["er", "ucb"]
        .iter()
        .all(|fam| outcome.results.iter().any(|r| r.policy().name() == *fam));
    let shape_ok = outcome.results.iter().all(|r| {
        r.config.n_agents == 20 && r.config.n_options == 100 && r.config.horizon == 20_000 && r.ledgers.len() == 4
    });
    let rows = fs::read_to_string(dir.path().join(REGRET_FILE))
        .unwrap()
        .lines()
        .count();
    let rows_ok = rows == 1 + outcome.results.len() * 20_000;
    verdict(
        present && families && shape_ok && rows_ok && elapsed <= Duration::from_secs(600),
        format!(
            "{} runs, files present {present}, both families {families}, {rows} regret rows; {:.1}s",
            outcome.results.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Replays a traced trial and checks every ledger quantity and agent
/// estimate against batch recomputation. Returns the number of mismatches.
fn replay_mismatches(config: &SimConfig, means: &[f64], trial: usize) -> (usize, usize) {
    let out = run_trial(config, trial).unwrap();
    let trace = out.trace.as_ref().unwrap();
    let (na, no) = (config.n_agents, config.n_options);
    let d2 = 4.0 * config.rewards.sigma2.unwrap();
    let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gap_lower = means
        .iter()
        .filter(|&&m| m < best)
        .map(|m| best - m)
        .fold(f64::INFINITY, f64::min);

    let mut sums = vec![vec![0.0f64; no]; na];
    let mut counts: Vec<Vec<u64>> = vec![vec![1; no]; na];
    let mut peer_sum = vec![vec![vec![0.0f64; no]; na]; na];
    let mut peer_cnt = vec![vec![vec![0u64; no]; na]; na];
    let mut pulls = vec![vec![0u64; no]; na];
    let mut events = vec![vec![0u64; no]; na];
    let mut sreg = vec![vec![0.0f64; no]; na];
    let mut creg = vec![vec![0.0f64; no]; na];
    let mut srew = vec![vec![0.0f64; no]; na];
    let mut crew = vec![vec![0.0f64; no]; na];
    let mut num = vec![vec![0u64; no]; na];
    let mut den = vec![vec![0u64; no]; na];
    let mut bad = 0;
    let mut checked = 0;

    for step in &trace.steps {
        let t = step.t;
        assert_eq!(step.rewards.len(), no);
        let l_prev = threshold(d2, t - 1, gap_lower);
        for j in 0..na {
            // The choice must be a maximizer of the index computed from the
            // replayed state.
            let q: Vec<f64> = (0..no)
                .map(|i| {
                    let est = (trace.initial[j].est[i] + sums[j][i]) / counts[j][i] as f64;
                    est + (psi(d2, t - 1) / counts[j][i] as f64).sqrt()
                })
                .collect();
            let qmax = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            checked += 1;
            if !close(q[step.choices[j]], qmax) {
                bad += 1;
            }
        }
        for j in 0..na {
            let choice = step.choices[j];
            let mut aware = vec![false; no];
            for &k in &step.neighbors[j] {
                aware[step.choices[k]] = true;
            }
            pulls[j][choice] += 1;
            sreg[j][choice] += best - means[choice];
            srew[j][choice] += step.rewards[choice];
            if t >= 2 && counts[j][choice] <= l_prev {
                num[j][choice] += 1;
            }
            for i in 0..no {
                if !aware[i] {
                    continue;
                }
                if counts[j][i] <= l_prev {
                    den[j][i] += 1;
                }
                if i != choice {
                    events[j][i] += 1;
                    creg[j][i] += best - means[i];
                    crew[j][i] += step.rewards[i];
                }
            }
            for i in 0..no {
                if aware[i] {
                    counts[j][i] += 1;
                    sums[j][i] += step.rewards[i];
                }
            }
            for &k in &step.neighbors[j] {
                if k != j {
                    let i = step.choices[k];
                    peer_cnt[j][k][i] += 1;
                    peer_sum[j][k][i] += step.rewards[i];
                }
            }
        }
    }

    let mut cmp_u = |a: u64, b: u64| {
        checked += 1;
        if a != b {
            bad += 1;
        }
    };
    let l = &out.ledger;
    for j in 0..na {
        for i in 0..no {
            let c = j * no + i;
            cmp_u(l.self_pulls[c], pulls[j][i]);
            cmp_u(l.comm_events[c], events[j][i]);
            cmp_u(l.fik_num[c], num[j][i]);
            cmp_u(l.fik_den[c], den[j][i]);
            cmp_u(out.agents[j].counts()[i], counts[j][i]);
            for (k, cnt) in peer_cnt[j].iter().enumerate() {
                cmp_u(out.agents[j].peer_counts(k)[i], cnt[i]);
            }
        }
    }
    let mut cmp_f = |a: f64, b: f64| {
        checked += 1;
        if !close(a, b) {
            bad += 1;
        }
    };
    for j in 0..na {
        for i in 0..no {
            let c = j * no + i;
            cmp_f(l.self_regret[c], sreg[j][i]);
            cmp_f(l.comm_regret[c], creg[j][i]);
            cmp_f(l.self_reward[c], srew[j][i]);
            cmp_f(l.comm_reward[c], crew[j][i]);
            let est = (trace.initial[j].est[i] + sums[j][i]) / counts[j][i] as f64;
            cmp_f(out.agents[j].estimates()[i], est);
            for (k, (cnt, sum)) in peer_cnt[j].iter().zip(&peer_sum[j]).enumerate() {
                let pe = if cnt[i] == 0 { 0.0 } else { sum[i] / cnt[i] as f64 };
                cmp_f(out.agents[j].peer_estimates(k)[i], pe);
            }
        }
    }
    let total_self: f64 = sreg.iter().flatten().sum::<f64>() / na as f64;
    cmp_f(
        l.final_network_regret_per_agent(dmamab::RegretKind::SelfRegret),
        total_self,
    );
    (bad, checked)
}

fn criterion_7() -> Verdict {
    let means = vec![1.0, 0.6, 0.0];
    let mut bad = 0;
    let mut checked = 0;
    for comm in [
        CommPolicy::Er { p: 0.5 },
        CommPolicy::Ucb { budget: 1 },
        CommPolicy::None,
    ] {
        let c = gaussian_config(2, means.clone(), 2.0, 200, 1, 77, comm);
        for trial in 0..3 {
            let (b, n) = replay_mismatches(&c, &means, trial);
            bad += b;
            checked += n;
        }
    }
    verdict(bad == 0, format!("{bad} mismatches in {checked} compared quantities"))
}

fn criterion_8() -> Verdict {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1usize, 1, 4]) {
        let mut a = args("desk", dir.path());
        a.trials = Some(6);
        a.threads = Some(threads);
        if let Err(e) = cli::run(&a) {
            return verdict(false, format!("run failed: {e:#}"));
        }
    }
    let mut same = true;
    for f in [REGRET_FILE, FIK_FILE, BOUNDS_FILE, MANIFEST_FILE] {
        let first = fs::read(dirs[0].path().join(f)).unwrap();
        for d in &dirs[1..] {
            same &= fs::read(d.path().join(f)).unwrap() == first;
        }
    }
    verdict(
        same,
        format!("outputs byte-identical across runs and 1/4 threads: {same}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("self-pull bound", criterion_1),
        ("estimate tail bound", criterion_2),
        ("f_ik properties", criterion_3),
        ("connectivity trend", criterion_4),
        ("UCB-comm vs ER", criterion_5),
        ("full-scale runnability", criterion_6),
        ("oracle equivalence", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            n + 1,
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
