//! Acceptance criteria, one printed line each. Run with `--nocapture` to see the lines.

use std::time::Instant;

use landscape_lab::certify::{certify_critical, fd_gradient, gd_probe, Objective, Verdict, GD_GRAD_TOL};
use landscape_lab::deep::{DeepInstance, DeepSpec};
use landscape_lab::factor::BlockPattern;
use landscape_lab::relu::{ActivationCone, ReluInstance};
use landscape_lab::report::{self, Command, RunOptions};
use landscape_lab::shallow::{non_optimal_drop, CriticalPointSpec, ShallowInstance};
use landscape_lab::spectral::GroupedSvd;
use landscape_lab::{Classification, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criteria that cannot pass as stated. Each must actually fail.
const KNOWN_UNATTAINABLE: &[&str] = &["AC3"];

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

/// `(global minimum value, loss, labelled global minimum)` for every certified point.
type Oracle = Vec<(f64, f64, bool)>;

fn gauss(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn random_pattern(sigma: &GroupedSvd, budget: usize, rng: &mut ChaCha8Rng) -> BlockPattern {
    let mut per_group = vec![0; sigma.groups.len()];
    let mut left = rng.random_range(0..=budget);
    let mut order: Vec<usize> = (0..per_group.len()).collect();
    for k in (1..order.len()).rev() {
        order.swap(k, rng.random_range(0..=k));
    }
    for g in order {
        if left == 0 {
            break;
        }
        let take = rng.random_range(0..=sigma.groups[g].multiplicity.min(left));
        per_group[g] = take;
        left -= take;
    }
    let p_bar = rng.random_range(0..=sigma.zero_count.min(left));
    BlockPattern::new(per_group, p_bar)
}

fn spec_scale(inst: &ShallowInstance, c: &Matrix) -> f64 {
    let c_inv = c.clone().try_inverse().unwrap();
    1.0 + inst.y().norm() * inst.x().norm() * c.norm().max(1.0) * c_inv.norm().max(1.0)
}

fn example1(lines: &mut Vec<Line>) {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("example1.json");
    let outcome = report::run(&RunOptions::new(Command::Example1, &out)).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let losses: Vec<f64> = v["search"].as_array().unwrap().iter().map(|f| f["loss"].as_f64().unwrap()).collect();
    let levels_ok = losses.len() == 3 && losses.iter().zip([0.5, 2.0, 2.5]).all(|(a, b)| (a - b).abs() <= 1e-9);
    let probes: Vec<bool> = v["search"].as_array().unwrap()[..2]
        .iter()
        .chain(v["constructed"].as_array().unwrap())
        .map(|f| f["probe"]["decrease_found"].as_bool() == Some(false) && f["probe"]["samples"].as_u64() == Some(2000))
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let pass = outcome.status.exit_code() == 0 && levels_ok && probes.iter().all(|&p| p) && secs < 5.0;
    lines.push(Line {
        id: "AC1",
        pass,
        detail: format!("example1 losses {losses:?}, probes without decrease {probes:?}, {secs:.2}s"),
    });
}

fn shallow_soundness(lines: &mut Vec<Line>, oracle: &mut Oracle) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_grad, mut worst_spec_grad, mut worst_loss) = (0.0f64, 0.0f64, 0.0f64);
    let (mut n, mut with_l1, mut rejected) = (0, 0, 0);
    let mut failures = Vec::new();
    while n < 100 {
        let (d0, d1, d2, m) =
            (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8));
        let inst = ShallowInstance::new(gauss(d0, m, &mut rng), gauss(d2, m, &mut rng), d1).unwrap();
        let pattern = random_pattern(inst.sigma(), inst.budget(), &mut rng);
        let c = gauss(d1, d1, &mut rng) + Matrix::identity(d1, d1) * 0.5;
        let mut spec = CriticalPointSpec::canonical(&inst, &pattern).unwrap().with_c(c.clone());
        if n % 2 == 1 {
            let l1 = gauss(d1, d0, &mut rng);
            let candidate = spec.clone().with_l1(l1.clone());
            if inst.side_residual(&candidate).unwrap() <= inst.side_tolerance(&candidate) {
                spec = candidate;
            } else {
                rejected += 1;
                // C L1 inside the range of V^T V keeps the side condition.
                let v = spec.blocks.assemble(d1).unwrap();
                let c_inv = c.clone().try_inverse().unwrap();
                spec = spec.with_l1(c_inv * v.transpose() * &v * l1);
            }
            with_l1 += 1;
        }
        let pt = match inst.construct_critical(&spec) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("construction: {e}"));
                n += 1;
                continue;
            }
        };
        let g = pt.certificate.max_grad_norm;
        worst_grad = worst_grad.max(g / (pt.certificate.tol_used / 1e-8));
        worst_spec_grad = worst_spec_grad.max(g / spec_scale(&inst, &spec.c));
        let formula = inst.loss_formula(&pattern).unwrap();
        worst_loss = worst_loss.max((pt.loss - formula).abs() / formula.abs().max(1.0));
        if pt.certificate.verdict != Verdict::Critical {
            failures.push(format!("not critical: {g:.2e}"));
        }
        oracle.push((inst.global_min_value(), pt.loss, pt.classification.is_global_min()));
        n += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = failures.is_empty() && worst_grad <= 1e-8 && worst_spec_grad <= 1e-8 && worst_loss <= 1e-9 && secs < 30.0;
    lines.push(Line {
        id: "AC2",
        pass,
        detail: format!(
            "100 specs ({with_l1} with L1, {rejected} raw L1 rejected by the side condition): scaled grad {worst_grad:.1e}, \
             spec-scaled grad {worst_spec_grad:.1e}, loss rel err {worst_loss:.1e}, {secs:.2}s {failures:?}"
        ),
    });
}

fn witness_formulas(lines: &mut Vec<Line>, oracle: &mut Oracle) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let eps = 0.1;
    let (mut literal, mut halved) = (0.0f64, 0.0f64);
    let mut count = 0;
    while count < 50 {
        let (d0, d2) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let m = rng.random_range(d0..=d0 + 3);
        let d1 = rng.random_range(1..=d2);
        let inst = ShallowInstance::new(gauss(d0, m, &mut rng), gauss(d2, m, &mut rng), d1).unwrap();
        let np = inst.sigma().positive_count();
        if np < 2 {
            continue;
        }
        let j = rng.random_range(1..np);
        let mut per_group = vec![0; np];
        per_group[j] = 1;
        let spec = CriticalPointSpec::canonical(&inst, &BlockPattern::new(per_group, 0)).unwrap();
        let pt = inst.construct_critical(&spec).unwrap();
        oracle.push((inst.global_min_value(), pt.loss, pt.classification.is_global_min()));
        let w = inst.descent_witness_non_optimal(&pt.weights[0], &pt.weights[1], eps).unwrap();
        let Classification::NonOptimalOrder { i: wi, j: wj, .. } = pt.classification else { panic!() };
        let (si, sj) = (inst.sigma().groups[wi].sigma, inst.sigma().groups[wj].sigma);
        let formula = eps * eps / (1.0 + eps * eps) * (si - sj);
        literal = literal.max((w.measured_drop() - formula).abs() / formula);
        halved = halved.max((w.measured_drop() - non_optimal_drop(eps, si, sj)).abs() / (0.5 * formula));
        count += 1;
    }

    let mut slopes = Vec::new();
    let mut strict = true;
    let mut count = 0;
    while count < 50 {
        let (d0, d2) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let m = rng.random_range(d0..=d0 + 3);
        let d1 = rng.random_range(2..=6);
        let inst = ShallowInstance::new(gauss(d0, m, &mut rng), gauss(d2, m, &mut rng), d1).unwrap();
        let np = inst.sigma().positive_count();
        let top = inst.budget().min(np);
        if top < 2 {
            continue;
        }
        let r = rng.random_range(0..top);
        let per_group: Vec<usize> = (0..np).map(|g| usize::from(g < r)).collect();
        let spec = CriticalPointSpec::canonical(&inst, &BlockPattern::new(per_group, 0)).unwrap();
        let pt = inst.construct_critical(&spec).unwrap();
        oracle.push((inst.global_min_value(), pt.loss, pt.classification.is_global_min()));
        if pt.classification != Classification::OptimalOrder {
            continue;
        }
        let sweep = [1e-1, 1e-2, 1e-3, 1e-4];
        let pts: Vec<(f64, f64)> = sweep
            .iter()
            .map(|&e| {
                let w = inst.descent_witness_optimal_fixed(&pt.weights[0], &pt.weights[1], e).unwrap();
                strict &= w.loss_after < w.loss_before;
                (e.ln(), (-w.measured_change()).max(f64::MIN_POSITIVE).ln())
            })
            .collect();
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / 4.0, pts.iter().map(|p| p.1).sum::<f64>() / 4.0);
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        slopes.push(slope);
        count += 1;
    }
    let slope_ok = slopes.iter().all(|s| (s - 3.0).abs() <= 0.2);
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    lines.push(Line {
        id: "AC3",
        pass: literal <= 1e-8 && strict && slope_ok,
        detail: format!(
            "non-optimal drop vs eps^2/(1+eps^2)(si-sj): worst rel err {literal:.3e}; optimal-order strict decrease {strict}, \
             slopes in [{lo:.3}, {hi:.3}]"
        ),
    });
    lines.push(Line {
        id: "AC3-half",
        pass: halved <= 1e-8 && strict && slope_ok,
        detail: format!(
            "same 50 witnesses vs 1/2 eps^2/(1+eps^2)(si-sj), the drop of 1/2|.|^2: worst rel err {halved:.3e}; \
             equivalently |R|^2 drops by the unhalved formula"
        ),
    });
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows() + b.nrows();
    let mut out = Matrix::zeros(n, n);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.nrows()), b.shape()).copy_from(b);
    out
}

fn deep_reduction(lines: &mut Vec<Line>, oracle: &mut Oracle) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = Vec::new();
    for _ in 0..50 {
        let (d0, d1, d2, m) =
            (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=7));
        let (x, y) = (gauss(d0, m, &mut rng), gauss(d2, m, &mut rng));
        let sh = ShallowInstance::new(x.clone(), y.clone(), d1).unwrap();
        let dp = DeepInstance::new(x, y, vec![d0, d1, d2]).unwrap();
        let pattern = random_pattern(sh.sigma(), sh.budget(), &mut rng);
        let c = gauss(d1, d1, &mut rng) + Matrix::identity(d1, d1) * 0.5;
        let s_pt = sh.construct_critical(&CriticalPointSpec::canonical(&sh, &pattern).unwrap().with_c(c.clone()));
        let mut spec = DeepSpec::canonical(&dp, &pattern).unwrap();
        spec.levels[0].c = Some(c);
        let d_pt = dp.construct(&spec);
        match (s_pt, d_pt) {
            (Ok(s), Ok(d)) => {
                if s.loss != d.point.loss || s.classification != d.point.classification {
                    mismatches.push(format!("{} vs {}", s.classification, d.point.classification));
                }
            }
            (s, d) => mismatches.push(format!("{:?} / {:?}", s.err(), d.err())),
        }
    }

    let (mut worst_grad, mut worst_loss, mut count) = (0.0f64, 0.0f64, 0);
    let mut failures = Vec::new();
    while count < 50 {
        let depth = if count % 2 == 0 { 3 } else { 4 };
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=5)).collect();
        let m = rng.random_range(1..=7);
        let inst = DeepInstance::new(gauss(dims[0], m, &mut rng), gauss(dims[depth], m, &mut rng), dims.clone()).unwrap();
        let mut pattern = random_pattern(inst.sigma0(), inst.budget(), &mut rng);
        pattern.p_bar = 0;
        let r = pattern.rank();
        let mut spec = DeepSpec::canonical(&inst, &pattern).unwrap();
        for (k, lv) in spec.levels.iter_mut().enumerate() {
            let w = dims[k + 1];
            lv.c = Some(block_diag(
                &(gauss(r, r, &mut rng) + Matrix::identity(r, r) * 2.0),
                &(gauss(w - r, w - r, &mut rng) + Matrix::identity(w - r, w - r) * 2.0),
            ));
        }
        match inst.construct(&spec) {
            Ok(pt) => {
                let cert = &pt.point.certificate;
                worst_grad = worst_grad.max(cert.max_grad_norm / (cert.tol_used / 1e-8));
                let formula = inst.loss_formula(&pattern).unwrap();
                worst_loss = worst_loss.max((pt.point.loss - formula).abs() / formula.abs().max(1.0));
                if !pt.conditions_hold {
                    failures.push(format!("{dims:?}: conditions fail {:?} {:?}", pt.consistency, pt.projector));
                }
                oracle.push((inst.global_min_value(), pt.point.loss, pt.point.classification.is_global_min()));
            }
            Err(e) => failures.push(format!("{dims:?}: {e}")),
        }
        count += 1;
    }
    lines.push(Line {
        id: "AC4",
        pass: mismatches.is_empty() && failures.is_empty() && worst_grad <= 1e-8 && worst_loss <= 1e-9,
        detail: format!(
            "depth 2 vs shallow on 50 instances: {} mismatches; depth 3/4 on 50 specs: scaled grad {worst_grad:.1e}, \
             loss rel err {worst_loss:.1e} {failures:?}",
            mismatches.len()
        ),
    });
}

fn gd_necessity(lines: &mut Vec<Line>, oracle: &mut Oracle) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut converged, mut attempts, mut worst_block) = (0, 0, 0.0f64);
    let mut bad = Vec::new();
    while converged < 30 && attempts < 90 {
        attempts += 1;
        let (d0, d1, d2) = (rng.random_range(1..=4), rng.random_range(1..=3), rng.random_range(1..=4));
        let m = rng.random_range(d0..=6);
        let (x, y) = (gauss(d0, m, &mut rng), gauss(d2, m, &mut rng));
        let run = gd_probe(&x, &y, &[d0, d1, d2], attempts, 200_000, None).unwrap();
        if !run.converged {
            continue;
        }
        converged += 1;
        let inst = ShallowInstance::new(x.clone(), y.clone(), d1).unwrap();
        let pt = inst.certify_point(&run.weights[0], &run.weights[1]).unwrap();
        let block = pt.block_residual.unwrap_or(f64::INFINITY);
        worst_block = worst_block.max(block);
        if block > 1e-6 || pt.pattern.is_none() || !pt.classification.is_critical() {
            bad.push(format!("{:?}: {} block {block:.1e}", (d0, d1, d2, m), pt.classification));
        }
        oracle.push((inst.global_min_value(), pt.loss, pt.classification.is_global_min()));
    }
    let secs = t.elapsed().as_secs_f64();
    lines.push(Line {
        id: "AC5",
        pass: converged == 30 && bad.is_empty(),
        detail: format!(
            "{converged} converged runs (|grad| <= {GD_GRAD_TOL:.0e}) out of {attempts}: worst block residual {worst_block:.1e}, \
             {secs:.2}s {bad:?}"
        ),
    });
}

fn oracle_agreement(lines: &mut Vec<Line>, oracle: &Oracle) {
    let mut bad = 0;
    for &(gmin, loss, is_min) in oracle {
        let tol = 1e-9 * gmin.abs().max(1.0);
        let ok = gmin <= loss + tol && (is_min == ((loss - gmin).abs() <= tol));
        bad += usize::from(!ok);
    }
    lines.push(Line {
        id: "AC6",
        pass: bad == 0 && !oracle.is_empty(),
        detail: format!("{} certified points from AC2-AC5, {bad} disagreements", oracle.len()),
    });
}

fn rel_err(g: &[Matrix], fd: &[Matrix]) -> f64 {
    let num: f64 = g.iter().zip(fd).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let den: f64 = g.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

fn gradient_oracles(lines: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 3];
    for k in 0..100 {
        let (d0, d1, d2, m) =
            (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=6));
        let (x, y) = (gauss(d0, m, &mut rng), gauss(d2, m, &mut rng));
        match k % 3 {
            0 => {
                let inst = ShallowInstance::new(x, y, d1).unwrap();
                let w = [gauss(d1, d0, &mut rng), gauss(d2, d1, &mut rng)];
                let fd = fd_gradient(|p| Objective::loss(&inst, p), &w, 1e-6);
                worst[0] = worst[0].max(rel_err(&Objective::gradients(&inst, &w), &fd));
            }
            1 => {
                let d3 = rng.random_range(1..=5);
                let y = gauss(d3, m, &mut rng);
                let inst = DeepInstance::new(x, y, vec![d0, d1, d2, d3]).unwrap();
                let w = [gauss(d1, d0, &mut rng), gauss(d2, d1, &mut rng), gauss(d3, d2, &mut rng)];
                let fd = fd_gradient(|p| Objective::loss(&inst, p), &w, 1e-6);
                worst[1] = worst[1].max(rel_err(&Objective::gradients(&inst, &w), &fd));
            }
            _ => {
                let inst = ReluInstance::new(x.clone(), y, d1).unwrap();
                let (a1, slack) = loop {
                    let a1 = gauss(d1, d0, &mut rng);
                    let slack = (&a1 * &x).iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
                    if slack > 1e-2 {
                        break (a1, slack);
                    }
                };
                let w = [a1, gauss(d2, d1, &mut rng)];
                let h = 1e-6f64.min(0.1 * slack / (1.0 + x.norm()));
                let fd = fd_gradient(|p| Objective::loss(&inst, p), &w, h);
                worst[2] = worst[2].max(rel_err(&Objective::gradients(&inst, &w), &fd));
            }
        }
    }
    lines.push(Line {
        id: "AC7",
        pass: worst.iter().all(|&e| e <= 1e-5),
        detail: format!(
            "100 random points, worst rel err shallow {:.1e}, deep {:.1e}, relu (inside cones) {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    });
}

fn spurious_minimum(lines: &mut Vec<Line>) {
    let inst =
        ReluInstance::new(Matrix::identity(2, 2), Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), 1).unwrap();
    let found = inst.exist_search_d1_1(0).unwrap();
    let constant = 0.5 * inst.y().norm_squared();
    let mut certified = Vec::new();
    for f in found.iter().filter(|f| !f.constant) {
        let cone = ActivationCone::new(vec![0], f.j.clone());
        let m = inst.cone_membership(&f.a1, &cone).unwrap();
        let red = inst.certify_point(&f.a1, &f.a2).unwrap();
        let reduced_ok = red.reduced.as_ref().is_some_and(|r| r.certificate.verdict == Verdict::Critical);
        let full = certify_critical(&inst, &[f.a1.clone(), f.a2.clone()]).unwrap();
        if m.inside && m.slack > 0.0 && reduced_ok && full.verdict == Verdict::Critical {
            certified.push(f.loss);
        }
    }
    certified.sort_by(f64::total_cmp);
    certified.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    let pass = certified.len() >= 2 && certified[certified.len() - 1] < constant;
    lines.push(Line {
        id: "AC8",
        pass,
        detail: format!("distinct certified in-cone losses {certified:?}, constant cone {constant}"),
    });
}

#[test]
fn acceptance() {
    let mut lines = Vec::new();
    let mut oracle = Oracle::new();
    example1(&mut lines);
    shallow_soundness(&mut lines, &mut oracle);
    witness_formulas(&mut lines, &mut oracle);
    deep_reduction(&mut lines, &mut oracle);
    gd_necessity(&mut lines, &mut oracle);
    oracle_agreement(&mut lines, &oracle);
    gradient_oracles(&mut lines);
    spurious_minimum(&mut lines);

    for l in &lines {
        let note = if KNOWN_UNATTAINABLE.contains(&l.id) && !l.pass { " (known: stated formula omits the 1/2)" } else { "" };
        println!("{} {}: {}{note}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.detail);
    }
    let unexpected: Vec<&str> =
        lines.iter().filter(|l| l.pass == KNOWN_UNATTAINABLE.contains(&l.id)).map(|l| l.id).collect();
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}
