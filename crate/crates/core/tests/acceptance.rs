//! One pass/fail line per acceptance criterion, each timed against its budget.

use std::process::ExitCode;
use std::time::Instant;

use ptlab::experiments::*;

struct Line {
    number: usize,
    name: &'static str,
    passed: bool,
    seconds: f64,
    budget: f64,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> ptlab::Result<T>) -> (Result<T, String>, f64) {
    let start = Instant::now();
    let r = f().map_err(|e| e.to_string());
    (r, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let ov = Overrides::default();
    let mut lines = Vec::new();
    let mut push = |number, name, budget, passed: bool, seconds, detail: String| {
        lines.push(Line { number, name, passed, seconds, budget, detail });
    };

    let (linear, s) = timed(|| linear_exactness(&LinearConfig::default()));
    let detail = match &linear {
        Ok(r) => r.cases.iter().map(|c| format!("{} {:.1e}", c.variant, c.max_error)).collect::<Vec<_>>().join(", "),
        Err(e) => e.clone(),
    };
    push(1, "linear exactness", 1.0, linear.as_ref().map_or(false, |r| r.passed), s, detail);

    let (order, s) = timed(|| integrator_order(&OrderConfig::default()));
    let detail = match &order {
        Ok(r) => format!("observed order {:.3}", r.observed_order),
        Err(e) => e.clone(),
    };
    push(2, "integrator order", 10.0, order.as_ref().map_or(false, |r| r.passed), s, detail);

    let (avg, s) = timed(|| averaging(&AveragingConfig::default(), &ov));
    let detail = match &avg {
        Ok(r) => {
            let mut parts: Vec<String> = r
                .sweeps
                .iter()
                .map(|w| format!("{}: decreasing {}, ratio {:.2e}", w.name, w.strictly_decreasing, w.reduction))
                .collect();
            parts.push(format!("autonomous {:.1e}", r.autonomous_max_error));
            parts.join("; ")
        }
        Err(e) => e.clone(),
    };
    push(3, "averaging", 60.0, avg.as_ref().map_or(false, |r| r.passed), s, detail);

    let (kras, s) = timed(|| krasnoselskii(&KrasnoselskiiConfig::default(), &ov));
    let detail = match &kras {
        Ok(r) => r
            .cases
            .iter()
            .map(|c| format!("{} {:?}", c.name, c.check.as_ref().map(|k| k.degree)))
            .collect::<Vec<_>>()
            .join(", "),
        Err(e) => e.clone(),
    };
    push(4, "krasnoselskii", 60.0, kras.as_ref().map_or(false, |r| r.passed), s, detail);

    let (branch, s) = timed(|| branching(&BranchConfig::default(), &ov));
    let detail = match &branch {
        Ok(r) => format!(
            "{} equilibria, final d/|u0| {:?}",
            r.equilibria,
            r.final_ratio.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>()
        ),
        Err(e) => e.clone(),
    };
    push(5, "branching", 120.0, branch.as_ref().map_or(false, |r| r.passed), s, detail);

    let (cont, s) = timed(|| continuation(&ContinuationConfig::default(), &ov));
    let detail = match &cont {
        Ok(r) => format!(
            "residual at lambda = 1: {:?}, counter-scenario boundary hit: {}",
            r.outcome.as_ref().and_then(|o| o.reached()).map(|o| o.residual),
            matches!(r.counter_outcome, Some(ptlab::averaging::ContinuationOutcome::BoundaryHit { .. }))
        ),
        Err(e) => e.clone(),
    };
    push(6, "continuation", 60.0, cont.as_ref().map_or(false, |r| r.passed), s, detail);

    let (res, s) = timed(|| resonance(&ResonanceConfig::default(), &ov));
    let detail = match &res {
        Ok(r) => r
            .cases
            .iter()
            .map(|c| {
                let d: Vec<String> = c.reports.iter().map(|x| format!("{}/{:?}", x.formula_index, x.direct_index)).collect();
                format!("k* = {}: {}", c.resonant_mode, d.join(" "))
            })
            .collect::<Vec<_>>()
            .join("; "),
        Err(e) => e.clone(),
    };
    push(7, "resonance index", 120.0, res.as_ref().map_or(false, |r| r.passed), s, detail);

    let (ll, s) = timed(|| landesman_lazer_suite(&LandesmanLazerConfig::default(), &ov));
    let detail = match &ll {
        Ok(r) => r
            .cases
            .iter()
            .map(|c| format!("{:?} margin {:.4}", c.verdict.verdict, c.verdict.margin))
            .collect::<Vec<_>>()
            .join(", "),
        Err(e) => e.clone(),
    };
    push(8, "landesman-lazer", 60.0, ll.as_ref().map_or(false, |r| r.passed), s, detail);

    let (cone_r, s) = timed(|| cone(&ConeConfig::default(), &ov));
    let detail = match &cone_r {
        Ok(r) => format!("residual {:.1e}, min grid value {:.2e}", r.residual, r.min_grid_value),
        Err(e) => e.clone(),
    };
    push(9, "cone", 60.0, cone_r.as_ref().map_or(false, |r| r.passed), s, detail);

    let (con, s) = timed(|| conley(&ConleyConfig::default(), &ov));
    let detail = match &con {
        Ok(r) => {
            let mut parts: Vec<String> = r.blocks.iter().map(|b| format!("{} {}", b.name, b.passed)).collect();
            parts.push(format!("semiflow {:?}", r.semiflow.as_ref().and_then(|x| x.deg_minus_f)));
            parts.join(", ")
        }
        Err(e) => e.clone(),
    };
    push(10, "poincare-hopf", 30.0, con.as_ref().map_or(false, |r| r.passed), s, detail);

    let (audit, s) = timed(|| index_audit(&IndexAuditConfig::default(), &ov));
    let detail = match &audit {
        Ok(r) => format!(
            "unbuckled index {:?} vs (-1)^k0 = {}, sum {} = degree {}",
            r.unbuckled_index_numerical, r.unbuckled_index_k0_formula, r.index_sum, r.semilinear_degree
        ),
        Err(e) => e.clone(),
    };
    push(11, "index audit", 60.0, audit.as_ref().map_or(false, |r| r.passed), s, detail);

    let start = Instant::now();
    let first = match (linear, order, avg, kras, branch, cont, res, ll, cone_r, con, audit) {
        (Ok(a), Ok(b), Ok(c), Ok(d), Ok(e), Ok(f), Ok(g), Ok(h), Ok(i), Ok(j), Ok(k)) => Some(SuiteReport {
            linear: a,
            order: b,
            averaging: c,
            krasnoselskii: d,
            branching: e,
            continuation: f,
            resonance: g,
            landesman_lazer: h,
            cone: i,
            conley: j,
            index_audit: k,
        }),
        _ => None,
    };
    let (same, detail) = match (first, run_suite(&ov)) {
        (Some(a), Ok(b)) => {
            let ea = numeric_fields(&Envelope::new("all", 7, a.passed(), a));
            let eb = numeric_fields(&Envelope::new("all", 7, b.passed(), b));
            (ea == eb, "rerun compared with timestamps removed".to_string())
        }
        (None, _) => (false, "an earlier criterion errored".to_string()),
        (_, Err(e)) => (false, e.to_string()),
    };
    push(12, "determinism", f64::INFINITY, same, start.elapsed().as_secs_f64(), detail);

    let mut all = true;
    for l in &lines {
        let in_time = l.seconds <= l.budget;
        let ok = l.passed && in_time;
        all &= ok;
        let budget = if l.budget.is_finite() { format!("budget {:.0} s", l.budget) } else { "no budget".into() };
        println!(
            "criterion {:>2} {:<18} {} ({:.2} s, {}) {}",
            l.number,
            l.name,
            if ok { "PASS" } else { "FAIL" },
            l.seconds,
            budget,
            l.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
