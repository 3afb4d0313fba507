//! Acceptance suite: one line per criterion at the default tolerances.
//! Exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use contact_blender::config::{RunConfig, Suite};
use contact_blender::report::{self, CheckRecord};
use contact_blender::suites::{run_check, Ctx, M_R_FIXTURES};
use contact_blender::{Exec, Result, Verdict};

struct Outcome {
    pass: bool,
    summary: String,
}

fn detail(c: &CheckRecord, key: &str) -> f64 {
    c.details.get(key).copied().unwrap_or(f64::NAN)
}

fn one(ctx: &Ctx, name: &str, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    run_check(ctx, name, r)
}

fn all_pass(recs: &[CheckRecord]) -> bool {
    !recs.is_empty() && recs.iter().all(|c| c.verdict == Verdict::Pass)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed().as_secs_f64())
}

fn c1_closed_form(ctx: &Ctx) -> Result<Outcome> {
    let (recs, secs) = timed(|| one(ctx, "flows.closed_form", None));
    let recs = recs?;
    let c = &recs[0];
    let err = ["lower_psi_error", "lower_f_error", "upper_psi_error", "upper_f_error"]
        .iter()
        .map(|k| detail(c, k))
        .fold(0.0, f64::max);
    Ok(Outcome {
        pass: c.verdict == Verdict::Pass && err <= 1e-8 && secs < 5.0,
        summary: format!("RK4 vs closed form on 2x100x100 grid: max error {err:.2e} (<= 1e-8), {secs:.2} s (< 5 s)"),
    })
}

fn c2_strict_contact(ctx: &Ctx) -> Result<Outcome> {
    let mut recs = Vec::new();
    for name in ["chart.base_map_strict", "chart.return_map_strict", "chart.affine_factors_strict"] {
        recs.extend(one(ctx, name, None)?);
    }
    let affine = recs.iter().map(|c| detail(c, "max_residual")).fold(0.0, f64::max);
    let mut psi = Vec::new();
    for &r in &ctx.cfg.run.r {
        psi.extend(one(ctx, "model.psi_kernel", Some(r))?);
    }
    let psi_res = psi.iter().map(|c| detail(c, "max_relative_residual")).fold(0.0, f64::max);
    let n = ctx.cfg.run.samples;
    Ok(Outcome {
        pass: all_pass(&recs) && all_pass(&psi) && affine <= 1e-10 && psi_res <= 1e-8,
        summary: format!(
            "base map, R_chi and affine factors on {n} samples: {affine:.2e} (<= 1e-10); Psi_r on {} samples: {psi_res:.2e} (<= 1e-8)",
            n / 10
        ),
    })
}

fn c3_contraction(ctx: &Ctx) -> Result<Outcome> {
    let mut recs = Vec::new();
    for r in [0.02, 0.05, 0.1] {
        recs.extend(one(ctx, "model.coordinate_contraction", Some(r))?);
    }
    let slack = recs.iter().map(|c| detail(c, "min_relative_slack")).fold(f64::INFINITY, f64::min);
    let used = recs.iter().map(|c| detail(c, "samples")).fold(f64::INFINITY, f64::min);
    Ok(Outcome {
        pass: all_pass(&recs),
        summary: format!("mu = 2(1 - 1e-6), r in {{0.02, 0.05, 0.1}}: min slack {slack:.3e} (> 0), >= {used} samples per r"),
    })
}

fn c4_m_r(ctx: &Ctx) -> Result<Outcome> {
    let (recs, secs) = timed(|| one(ctx, "model.m_r", None));
    let c = &recs?[0];
    let vals: Vec<String> = M_R_FIXTURES
        .iter()
        .map(|(r, want)| format!("{r}:{}/{want}", detail(c, &format!("m_r@{r}"))))
        .collect();
    let fixtures_ok = M_R_FIXTURES
        .iter()
        .all(|(r, want)| detail(c, &format!("m_r@{r}")) == *want as f64);
    Ok(Outcome {
        pass: c.verdict == Verdict::Pass && fixtures_ok && secs < 30.0,
        summary: format!("m_r (got/fixture) {}; monotone, above 0.5(-ln r)/(N r), step-halving stable; {secs:.2} s (< 30 s)", vals.join(" ")),
    })
}

fn c5_axioms(ctx: &Ctx) -> Result<Outcome> {
    let mut recs = Vec::new();
    let (res, secs) = timed(|| -> Result<()> {
        for r in [0.02, 0.05, 0.1] {
            recs.extend(one(ctx, "blender.axiom", Some(r))?);
        }
        Ok(())
    });
    res?;
    let worst = recs
        .iter()
        .min_by(|a, b| a.margin.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.margin.unwrap_or(f64::NEG_INFINITY)))
        .map(|c| format!("{} at r = {} ({:.3e})", c.name, c.r.unwrap_or(f64::NAN), c.margin.unwrap_or(f64::NAN)))
        .unwrap_or_default();
    let margins_ok = recs.iter().all(|c| c.margin.is_some_and(|m| m > 0.0));
    Ok(Outcome {
        pass: recs.len() == 18 && all_pass(&recs) && margins_ok && secs < 600.0,
        summary: format!("axioms a-f at r in {{0.02, 0.05, 0.1}}: {} of 18 pass, smallest margin {worst}; {secs:.1} s", recs.iter().filter(|c| c.verdict == Verdict::Pass).count()),
    })
}

fn c6_distinctive(ctx: &Ctx) -> Result<Outcome> {
    let recs = one(ctx, "blender.distinctive", Some(0.05))?;
    let c = &recs[0];
    let (a, b) = (detail(c, "pass_rate"), detail(c, "pass_rate_k64"));
    Ok(Outcome {
        pass: c.verdict == Verdict::Pass && a == 1.0 && b == 1.0,
        summary: format!(
            "r = 0.05, {} disks x {} iterations: survival {a} at 32 nodes, {b} at 64 nodes; max (s,t)-diameter {:.3e}",
            ctx.cfg.run.distinctive_disks,
            ctx.cfg.run.distinctive_iterations,
            detail(c, "max_st_diameter")
        ),
    })
}

fn c7_holonomy(ctx: &Ctx) -> Result<Outcome> {
    let mut het = Vec::new();
    let mut hold = Vec::new();
    for r in [0.02, 0.05] {
        het.extend(one(ctx, "holonomy.heteroclinic_identity", Some(r))?);
        hold.extend(one(ctx, "holonomy.holder", Some(r))?);
    }
    let err = het.iter().map(|c| detail(c, "max_error")).fold(0.0, f64::max);
    let kappas: Vec<String> = hold.iter().map(|c| format!("{:.4}", detail(c, "kappa_hat"))).collect();
    let kappa_ok = hold.iter().all(|c| {
        let k = detail(c, "kappa_hat");
        k > 0.0 && k <= 1.0
    });
    Ok(Outcome {
        pass: all_pass(&het) && all_pass(&hold) && err <= 1e-4 && kappa_ok,
        summary: format!(
            "heteroclinic identity max error {err:.2e} (<= 1e-4); kappa_hat on {} pairs: {}",
            ctx.cfg.run.holder_pairs,
            kappas.join(", ")
        ),
    })
}

fn c8_center_drift(ctx: &Ctx) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for r in [0.05, 0.02] {
        let recs = one(ctx, "cones.center_drift", Some(r))?;
        let c = &recs[0];
        let (dev, du) = (detail(c, "chart_deviation"), detail(c, "du"));
        let ok = c.verdict == Verdict::Pass && dev <= 1e-8 && du <= 1e-9;
        pass &= ok;
        parts.push(format!(
            "r = {r}: nu {:.3} vs {:.3}, eta {:.2e} vs {:.2e}, chart deviation {dev:.1e}, du {du:.1e}",
            detail(c, "nu"),
            detail(c, "nu_target"),
            detail(c, "eta"),
            detail(c, "eta_target")
        ));
    }
    Ok(Outcome {
        pass,
        summary: parts.join("; "),
    })
}

fn c9_suspension(ctx: &Ctx) -> Result<Outcome> {
    let field = one(ctx, "suspension.identity_field", None)?;
    let fit = one(ctx, "suspension.c1_scaling", None)?;
    let err = detail(&field[0], "max_field_error");
    let r2 = detail(&fit[0], "r_squared");
    Ok(Outcome {
        pass: all_pass(&field) && all_pass(&fit) && err <= 1e-9 && r2 >= 0.99,
        summary: format!("Z = d_tau + V_H for 20 random H: max error {err:.2e} (<= 1e-9); C1 scaling R^2 = {r2:.5} (>= 0.99)"),
    })
}

fn c10_transitivity(ctx: &Ctx) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in [
        "transitivity.cat_map",
        "transitivity.identity",
        "transitivity.quarter_rotation",
        "transitivity.golden_rotation",
        "transitivity.dividing_set",
    ] {
        let (recs, secs) = timed(|| one(ctx, name, None));
        let recs = recs?;
        pass &= all_pass(&recs) && secs < 10.0;
        parts.push(format!("{} {} {secs:.2} s", name.trim_start_matches("transitivity."), recs[0].verdict));
    }
    Ok(Outcome {
        pass,
        summary: parts.join(", "),
    })
}

fn c11_embeddings(ctx: &Ctx) -> Result<Outcome> {
    let disk = one(ctx, "embeddings.disk", None)?;
    let cos = one(ctx, "embeddings.cosphere", None)?;
    let (a, b) = (detail(&disk[0], "max_residual"), detail(&cos[0], "max_residual"));
    Ok(Outcome {
        pass: all_pass(&disk) && all_pass(&cos) && a.max(b) <= 1e-9,
        summary: format!("a in {{1/2, 1, 2}}: disk {a:.2e}, cosphere stages {b:.2e} (<= 1e-9)"),
    })
}

fn c12_reproducible() -> Result<Outcome> {
    let mut cfg = RunConfig::default();
    cfg.run.suites = Suite::ALL.to_vec();
    cfg.run.r = vec![0.05];
    cfg.run.samples = 1000;
    cfg.run.distinctive_disks = 10;
    cfg.run.distinctive_iterations = 10;
    cfg.run.holder_pairs = 50;
    let a = report::run(&cfg, Exec::default())?.0.to_json();
    let b = report::run(&cfg, Exec::default())?.0.to_json();
    Ok(Outcome {
        pass: a == b,
        summary: format!("all suites at r = 0.05 run twice: {} bytes each, identical = {}", a.len(), a == b),
    })
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

fn main() -> ExitCode {
    let ctx = Ctx::new(RunConfig::default(), Exec::default()).expect("default config is valid");
    let criteria: Vec<Criterion> = vec![
        ("closed-form flow agreement", Box::new(|| c1_closed_form(&ctx))),
        ("strict-contact residuals", Box::new(|| c2_strict_contact(&ctx))),
        ("coordinate contraction", Box::new(|| c3_contraction(&ctx))),
        ("m_r behavior", Box::new(|| c4_m_r(&ctx))),
        ("blender axioms", Box::new(|| c5_axioms(&ctx))),
        ("distinctive blender property", Box::new(|| c6_distinctive(&ctx))),
        ("holonomy identity and Holder estimate", Box::new(|| c7_holonomy(&ctx))),
        ("center drift", Box::new(|| c8_center_drift(&ctx))),
        ("suspension field and C1 scaling", Box::new(|| c9_suspension(&ctx))),
        ("transitivity detector", Box::new(|| c10_transitivity(&ctx))),
        ("embedding pullback identities", Box::new(|| c11_embeddings(&ctx))),
        ("reproducibility", Box::new(c12_reproducible)),
    ];
    let mut failed = Vec::new();
    for (i, (title, f)) in criteria.iter().enumerate() {
        let (out, secs) = timed(f);
        let (pass, summary) = match out {
            Ok(o) => (o.pass, o.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} {} [{title}] {summary} ({secs:.1} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed.len(), criteria.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing: {failed:?}");
        ExitCode::FAILURE
    }
}
